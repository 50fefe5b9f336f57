use std::fs;
use std::io::Write;

use saeb::data::{load_adjacency, load_panel};
use saeb::inference::{
    fit, predict_holdout, summarize, write_cells_csv, FitSummary, MCMCConfig, Problem,
};
use saeb::model::ModelSpec;

use super::{
    parse_family, path_arg, schema_for, OutputDir, ADJACENCY_FILE, MODEL_FILE, PANEL_FILE,
    SAMPLES_DIR,
};
use crate::error::{CliError, CliResult};
use crate::manifest::{absolute, artifact_hashes, input_hash, now_unix, sha256_bytes, RunManifest};
use crate::{FitArgs, Outcome};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const FITTED_FILE: &str = "fitted.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const ACCEPTANCE_FILE: &str = "acceptance.csv";

pub fn run(a: &FitArgs) -> CliResult<Outcome> {
    let started = now_unix();
    let family = a.model.as_deref().map(parse_family).transpose()?;
    let spec = match (&a.spec, family) {
        (Some(p), f) => ModelSpec::parse(&fs::read_to_string(p)?, f)?,
        (None, Some(f)) => ModelSpec::full(f),
        (None, None) => return Err(CliError::Usage("give --model or --spec".into())),
    };
    if !(a.psrf_threshold > 1.0) {
        return Err(CliError::Engine(saeb::Error::Config {
            key: "psrf-threshold".into(),
            message: format!("must exceed 1, got {}", a.psrf_threshold),
        }));
    }
    let dataset = load_panel(&a.panel, &schema_for(&spec))?;
    let graph = a.adjacency.as_ref().map(load_adjacency).transpose()?;
    let config = MCMCConfig {
        num_chains: a.chains,
        iterations: a.iters,
        burn_in: a.burnin,
        thin: a.thin,
        base_seed: a.seed,
        ..MCMCConfig::default()
    };
    config.validate()?;

    let (problem, samples, predictions) = if a.holdout_last_quarter {
        let h = predict_holdout(
            &dataset,
            graph.as_ref(),
            &spec,
            &config,
            dataset.num_quarters() - 1,
        )?;
        (h.problem, h.samples, Some(h.predictions))
    } else {
        let problem = Problem::new(&dataset, graph.as_ref(), &spec)?;
        let samples = fit(&problem, &config)?;
        (problem, samples, None)
    };
    let summary = summarize(&samples, &problem);
    let num_fixed = problem.layout().num_predictors * problem.design().num_columns();
    let flagged: Vec<bool> = summary
        .parameters
        .iter()
        .enumerate()
        .map(|(i, p)| i < num_fixed && p.psrf.is_some_and(|r| !(r <= a.psrf_threshold)))
        .collect();

    let mut out = OutputDir::create(&a.out)?;
    let samples_dir = out.dir.join(SAMPLES_DIR);
    if samples_dir.exists() {
        fs::remove_dir_all(&samples_dir)?;
    }
    out.add(samples.write_csv_dir(&problem, &samples_dir)?);
    out.write_with(SUMMARY_FILE, |w| write_summary(&summary, &flagged, w))?;
    out.write_with(FITTED_FILE, |w| summary.write_fitted_csv(w))?;
    if let Some(pred) = &predictions {
        out.write_with(PREDICTIONS_FILE, |w| write_cells_csv(pred, w))?;
    }
    out.write_with(ACCEPTANCE_FILE, |w| {
        writeln!(
            w,
            "chain,coefficients,effects,precisions,scale_moves,ridge_moves,dispersion"
        )?;
        for (c, r) in samples.acceptance().iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                c + 1,
                r.coefficients,
                r.effects,
                r.precisions,
                r.scale_moves,
                r.ridge_moves,
                r.dispersion
            )?;
        }
        Ok(())
    })?;
    let spec_text = spec.to_text();
    out.write_bytes(MODEL_FILE, spec_text.as_bytes())?;
    out.write_bytes(PANEL_FILE, &fs::read(&a.panel)?)?;
    if let Some(p) = &a.adjacency {
        out.write_bytes(ADJACENCY_FILE, &fs::read(p)?)?;
    } else if out.dir.join(ADJACENCY_FILE).exists() {
        fs::remove_file(out.dir.join(ADJACENCY_FILE))?;
    }
    if predictions.is_none() && out.dir.join(PREDICTIONS_FILE).exists() {
        fs::remove_file(out.dir.join(PREDICTIONS_FILE))?;
    }

    let mut args = vec![
        "fit".into(),
        "--panel".into(),
        path_arg(&absolute(&a.panel)?),
    ];
    let mut inputs = vec![input_hash(&a.panel)?];
    let mut config_paths = Vec::new();
    if let Some(p) = &a.adjacency {
        args.extend(["--adjacency".into(), path_arg(&absolute(p)?)]);
        inputs.push(input_hash(p)?);
    }
    if let Some(p) = &a.spec {
        let abs = path_arg(&absolute(p)?);
        args.extend(["--spec".into(), abs.clone()]);
        config_paths.push(abs);
        inputs.push(input_hash(p)?);
    }
    if let Some(m) = &a.model {
        args.extend(["--model".into(), m.clone()]);
    }
    for (flag, v) in [
        ("--seed", a.seed.to_string()),
        ("--chains", a.chains.to_string()),
        ("--iters", a.iters.to_string()),
        ("--burnin", a.burnin.to_string()),
        ("--thin", a.thin.to_string()),
        ("--psrf-threshold", a.psrf_threshold.to_string()),
    ] {
        args.extend([flag.to_string(), v]);
    }
    if a.holdout_last_quarter {
        args.push("--holdout-last-quarter".into());
    }
    let mut manifest = RunManifest::new("fit", args, started);
    manifest.seed = Some(a.seed);
    manifest.spec_hash = Some(sha256_bytes(spec_text.as_bytes()));
    manifest.config_paths = config_paths;
    manifest.inputs = inputs;
    for (k, v) in [
        ("family", spec.family.name().to_string()),
        ("chains", a.chains.to_string()),
        ("iters", a.iters.to_string()),
        ("burnin", a.burnin.to_string()),
        ("thin", a.thin.to_string()),
        ("holdout", a.holdout_last_quarter.to_string()),
        ("psrf_threshold", a.psrf_threshold.to_string()),
    ] {
        manifest.settings.insert(k.into(), v);
    }
    manifest.artifacts = artifact_hashes(&out.dir, &out.files)?;
    manifest.write(&out.dir)?;

    let bad: Vec<&str> = summary
        .parameters
        .iter()
        .zip(&flagged)
        .filter(|(_, f)| **f)
        .map(|(p, _)| p.name.as_str())
        .collect();
    if bad.is_empty() {
        Ok(Outcome::Ok)
    } else {
        eprintln!(
            "warning: R-hat above {} for fixed effect(s): {}",
            a.psrf_threshold,
            bad.join(", ")
        );
        Ok(Outcome::NotConverged)
    }
}

/// `parameter,mean,sd,q025,q975,psrf,flag`; `flag` is `psrf` on fixed
/// effects whose R̂ exceeds the threshold.
fn write_summary(summary: &FitSummary, flagged: &[bool], w: &mut dyn Write) -> saeb::Result<()> {
    writeln!(w, "parameter,mean,sd,q025,q975,psrf,flag")?;
    for (p, f) in summary.parameters.iter().zip(flagged) {
        let name = if p.name.contains(',') {
            format!("\"{}\"", p.name)
        } else {
            p.name.clone()
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            name,
            p.mean,
            p.sd,
            p.q025,
            p.q975,
            p.psrf.map(|r| r.to_string()).unwrap_or_default(),
            if *f { "psrf" } else { "" }
        )?;
    }
    Ok(())
}
