use saeb::diagnostics::{
    direct_estimate, direct_region_intervals, rate_draws, rate_summary, region_estimates,
    region_rate_intervals, rrmse_posterior, RegionEstimate,
};

use super::{load_fits, path_arg, truth_rates, OutputDir};
use crate::error::{CliError, CliResult};
use crate::manifest::{
    absolute, artifact_hashes, input_hash, now_unix, RunManifest, MANIFEST_FILE,
};
use crate::{CompareArgs, Outcome};

pub const COMPARISON_FILE: &str = "comparison.csv";

pub fn run(a: &CompareArgs) -> CliResult<Outcome> {
    let started = now_unix();
    let fits = load_fits(&a.fits)?;
    let panel_hash = |f: &super::LoadedFit| {
        f.manifest
            .inputs
            .first()
            .map(|h| h.sha256.clone())
            .unwrap_or_default()
    };
    let first = &fits[0];
    for f in &fits[1..] {
        if panel_hash(f) != panel_hash(first)
            || f.dataset.num_quarters() != first.dataset.num_quarters()
        {
            return Err(CliError::Usage(format!(
                "{} and {} were fitted to different panels",
                first.dir.display(),
                f.dir.display()
            )));
        }
    }
    let (nj, nt) = (first.dataset.num_regions(), first.dataset.num_quarters());
    let truth = a
        .truth
        .as_deref()
        .map(|p| truth_rates(p, nj, nt))
        .transpose()?;

    let mut methods: Vec<(Vec<RegionEstimate>, Vec<(f64, f64)>)> =
        Vec::with_capacity(fits.len() + 1);
    for f in &fits {
        let draws = rate_draws(&f.samples, &f.problem, &f.dataset);
        let cells: Vec<(f64, f64)> = rate_summary(&draws)
            .iter()
            .map(|(m, sd)| (*m, rrmse_posterior(*m, *sd).unwrap_or(f64::NAN)))
            .collect();
        methods.push((
            region_estimates(&f.name, nj, nt, &cells, truth.as_deref()),
            region_rate_intervals(&draws, nj, nt),
        ));
    }
    let direct = direct_estimate(&first.dataset);
    let cells: Vec<(f64, f64)> = direct.iter().map(|d| (d.rate, d.rrmse)).collect();
    methods.push((
        region_estimates("direct", nj, nt, &cells, truth.as_deref()),
        direct_region_intervals(&direct, nj, nt),
    ));

    let mut out = OutputDir::create(&a.out)?;
    out.write_with(COMPARISON_FILE, |w| {
        writeln!(w, "region,method,estimate,q025,q975,rrmse,truth")?;
        for j in 0..nj {
            for (rows, intervals) in &methods {
                let r = &rows[j];
                let (lo, hi) = intervals[j];
                let truth = r.truth.map(|t| t.to_string()).unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    j + 1,
                    r.method,
                    r.estimate,
                    lo,
                    hi,
                    r.rrmse,
                    truth
                )?;
            }
        }
        Ok(())
    })?;

    let mut args = vec!["compare".to_string()];
    let mut inputs = Vec::new();
    for d in &a.fits {
        args.extend(["--fit".into(), path_arg(&absolute(d)?)]);
        inputs.push(input_hash(&d.join(MANIFEST_FILE))?);
    }
    if let Some(p) = &a.truth {
        args.extend(["--truth".into(), path_arg(&absolute(p)?)]);
        inputs.push(input_hash(p)?);
    }
    let mut manifest = RunManifest::new("compare", args, started);
    manifest.inputs = inputs;
    manifest.artifacts = artifact_hashes(&out.dir, &out.files)?;
    manifest.write(&out.dir)?;
    Ok(Outcome::Ok)
}
