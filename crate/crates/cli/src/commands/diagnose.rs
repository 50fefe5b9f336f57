use saeb::diagnostics::{
    diagnose, direct_estimate, region_estimates, write_observations_rows, write_regions_csv,
    write_summary_csv, DiagnoseOptions, DiagnosticsReport, PitMode, OBSERVATIONS_HEADER,
};
use saeb::model::Family;

use super::{load_fits, path_arg, truth_rates, OutputDir};
use crate::error::CliResult;
use crate::manifest::{
    absolute, artifact_hashes, input_hash, now_unix, RunManifest, MANIFEST_FILE,
};
use crate::{DiagnoseArgs, Outcome};

pub const SUMMARY_FILE: &str = "diagnostics_summary.csv";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const REGIONS_FILE: &str = "regions.csv";
pub const PSRF_FILE: &str = "psrf.csv";

pub fn run(a: &DiagnoseArgs) -> CliResult<Outcome> {
    let started = now_unix();
    let fits = load_fits(&a.fits)?;
    let pit_mode = if a.randomized_pit {
        PitMode::Randomized { seed: a.seed }
    } else {
        PitMode::Mid
    };
    let mut reports: Vec<DiagnosticsReport> = Vec::with_capacity(fits.len());
    let mut direct_rows = Vec::new();
    for (i, f) in fits.iter().enumerate() {
        let (j, t) = (f.dataset.num_regions(), f.dataset.num_quarters());
        let truth = a
            .truth
            .as_deref()
            .map(|p| truth_rates(p, j, t))
            .transpose()?;
        let options = DiagnoseOptions {
            model: f.name.clone(),
            pit_mode,
            skip_cpo: a.skip_multinomial_cpo && f.problem.family() == Family::Multinomial,
            count_scale: a.count_scale,
            truth: truth.clone(),
        };
        reports.push(diagnose(&f.samples, &f.problem, &f.dataset, &options)?);
        if i == 0 {
            let cells: Vec<(f64, f64)> = direct_estimate(&f.dataset)
                .iter()
                .map(|d| (d.rate, d.rrmse))
                .collect();
            direct_rows = region_estimates("direct", j, t, &cells, truth.as_deref());
        }
    }

    let mut out = OutputDir::create(&a.out)?;
    out.write_with(SUMMARY_FILE, |w| write_summary_csv(&reports, w))?;
    out.write_with(OBSERVATIONS_FILE, |w| {
        writeln!(w, "{OBSERVATIONS_HEADER}")?;
        for (r, f) in reports.iter().zip(&fits) {
            let (nj, nt) = (f.dataset.num_regions(), f.dataset.num_quarters());
            let cells: Vec<(usize, usize)> =
                (0..nj).flat_map(|j| (0..nt).map(move |t| (j, t))).collect();
            write_observations_rows(r, &cells, &mut *w)?;
        }
        Ok(())
    })?;
    let mut regions: Vec<_> = reports
        .iter()
        .flat_map(|r| r.regions.iter().cloned())
        .collect();
    regions.extend(direct_rows);
    out.write_with(REGIONS_FILE, |w| write_regions_csv(&regions, w))?;
    out.write_with(PSRF_FILE, |w| {
        writeln!(w, "model,parameter,psrf")?;
        for r in &reports {
            for (name, v) in &r.psrf_table {
                let name = if name.contains(',') {
                    format!("\"{name}\"")
                } else {
                    name.clone()
                };
                writeln!(w, "{},{},{}", r.model, name, v)?;
            }
        }
        Ok(())
    })?;

    let mut args = vec!["diagnose".to_string()];
    let mut inputs = Vec::new();
    for d in &a.fits {
        args.extend(["--fit".into(), path_arg(&absolute(d)?)]);
        inputs.push(input_hash(&d.join(MANIFEST_FILE))?);
    }
    if let Some(p) = &a.truth {
        args.extend(["--truth".into(), path_arg(&absolute(p)?)]);
        inputs.push(input_hash(p)?);
    }
    if a.skip_multinomial_cpo {
        args.push("--skip-multinomial-cpo".into());
    }
    if a.randomized_pit {
        args.push("--randomized-pit".into());
    }
    if a.count_scale {
        args.push("--count-scale".into());
    }
    args.extend(["--seed".into(), a.seed.to_string()]);
    let mut manifest = RunManifest::new("diagnose", args, started);
    manifest.seed = Some(a.seed);
    manifest.inputs = inputs;
    manifest.artifacts = artifact_hashes(&out.dir, &out.files)?;
    manifest.write(&out.dir)?;
    Ok(Outcome::Ok)
}
