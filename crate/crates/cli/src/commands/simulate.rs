use std::fs;

use saeb::data::{load_adjacency, write_adjacency, write_panel};
use saeb::simulate::{simulate, write_truth_csv, GraphSource, ScenarioConfig};

use super::{parse_family, path_arg, OutputDir, ADJACENCY_FILE, PANEL_FILE};
use crate::error::CliResult;
use crate::manifest::{absolute, artifact_hashes, input_hash, now_unix, RunManifest};
use crate::scenario;
use crate::{Outcome, SimulateArgs};

pub const TRUTH_FILE: &str = "truth.csv";

/// Neighbours per region of the random graph used when the panel does not
/// have 28 regions.
const RANDOM_GRAPH_K: usize = 4;

pub fn run(a: &SimulateArgs) -> CliResult<Outcome> {
    let started = now_unix();
    let pairs = match &a.config {
        Some(p) => scenario::parse_pairs(&fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    let family = match scenario::family_of(&pairs)? {
        Some(f) if a.family == "binomial" => f,
        _ => parse_family(&a.family)?,
    };
    let mut config = ScenarioConfig::default_for(family);
    scenario::apply(&mut config, &pairs)?;
    config.seed = a.seed;
    if let Some(phi) = a.phi {
        config.dispersion = Some(phi);
    }
    if let Some(j) = a.regions {
        config.num_regions = j;
    }
    if let Some(t) = a.quarters {
        config.num_quarters = t;
    }
    if let Some(path) = &a.adjacency {
        config.graph = GraphSource::Given(load_adjacency(path)?);
    } else if config.graph == GraphSource::Portugal && config.num_regions != 28 {
        config.graph = GraphSource::RandomKnn { k: RANDOM_GRAPH_K };
    }
    let sim = simulate(&config)?;
    for w in &sim.warnings {
        eprintln!("warning: {w}");
    }

    let mut out = OutputDir::create(&a.out)?;
    out.write_with(PANEL_FILE, |w| write_panel(&sim.dataset, w))?;
    let adjacency_path = out.dir.join(ADJACENCY_FILE);
    write_adjacency(&sim.graph, &adjacency_path)?;
    out.add([adjacency_path]);
    out.write_with(TRUTH_FILE, |w| {
        write_truth_csv(&sim.truth, config.num_quarters, w)
    })?;

    let mut args = vec![
        "simulate".into(),
        "--family".into(),
        family.name().into(),
        "--seed".into(),
        a.seed.to_string(),
    ];
    let mut manifest_inputs = Vec::new();
    let mut config_paths = Vec::new();
    if let Some(phi) = a.phi {
        args.extend(["--phi".into(), phi.to_string()]);
    }
    if let Some(j) = a.regions {
        args.extend(["--regions".into(), j.to_string()]);
    }
    if let Some(t) = a.quarters {
        args.extend(["--quarters".into(), t.to_string()]);
    }
    if let Some(p) = &a.config {
        let abs = absolute(p)?;
        args.extend(["--config".into(), path_arg(&abs)]);
        config_paths.push(path_arg(&abs));
        manifest_inputs.push(input_hash(p)?);
    }
    if let Some(p) = &a.adjacency {
        args.extend(["--adjacency".into(), path_arg(&absolute(p)?)]);
        manifest_inputs.push(input_hash(p)?);
    }
    let mut manifest = RunManifest::new("simulate", args, started);
    manifest.seed = Some(a.seed);
    manifest.config_paths = config_paths;
    manifest.inputs = manifest_inputs;
    manifest
        .settings
        .insert("family".into(), family.name().into());
    manifest
        .settings
        .insert("regions".into(), config.num_regions.to_string());
    manifest
        .settings
        .insert("quarters".into(), config.num_quarters.to_string());
    manifest.artifacts = artifact_hashes(&out.dir, &out.files)?;
    manifest.write(&out.dir)?;
    Ok(Outcome::Ok)
}
