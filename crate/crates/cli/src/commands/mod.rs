pub mod compare;
pub mod diagnose;
pub mod fit;
pub mod replay;
pub mod simulate;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use saeb::data::{load_adjacency, load_panel, PanelDataset, PanelSchema, RegionGraph};
use saeb::inference::{MCMCConfig, PosteriorSamples, Problem};
use saeb::model::{Family, ModelSpec};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

pub const PANEL_FILE: &str = "panel.csv";
pub const ADJACENCY_FILE: &str = "adjacency.txt";
pub const MODEL_FILE: &str = "model.txt";
pub const SAMPLES_DIR: &str = "samples";

/// Collects the files a command writes into its output directory.
pub struct OutputDir {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Writes `name` through a buffered writer produced by `body`.
    pub fn write_with(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> saeb::Result<()>,
    ) -> CliResult<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    pub fn add(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.files.extend(paths);
    }
}

pub fn parse_family(name: &str) -> CliResult<Family> {
    Ok(name.parse::<Family>()?)
}

pub fn schema_for(spec: &ModelSpec) -> PanelSchema {
    PanelSchema {
        regional: spec.predictor.regional_terms.clone(),
        temporal: spec.predictor.temporal_terms.clone(),
        spatiotemporal: spec.predictor.spatiotemporal_terms.clone(),
        weight_column: "weight".into(),
    }
}

pub fn path_arg(p: &Path) -> String {
    p.display().to_string()
}

/// A fit run reloaded from its output directory.
pub struct LoadedFit {
    pub name: String,
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub dataset: PanelDataset,
    pub problem: Problem,
    pub samples: PosteriorSamples,
}

/// Reloads a `fit` output directory after checking every recorded hash.
pub fn load_fit(dir: &Path) -> CliResult<LoadedFit> {
    let manifest = RunManifest::read_verified(dir)?;
    if manifest.command != "fit" {
        return Err(CliError::Manifest(format!(
            "{} is a `{}` run, not `fit`",
            dir.display(),
            manifest.command
        )));
    }
    let spec_text = fs::read_to_string(dir.join(MODEL_FILE))?;
    let spec = ModelSpec::parse(&spec_text, None)?;
    let mut dataset = load_panel(dir.join(PANEL_FILE), &schema_for(&spec))?;
    if manifest.setting("holdout")? == "true" {
        dataset = dataset.truncate_quarters(dataset.num_quarters() - 1)?;
    }
    let adjacency = dir.join(ADJACENCY_FILE);
    let graph: Option<RegionGraph> = if adjacency.exists() {
        Some(load_adjacency(&adjacency)?)
    } else {
        None
    };
    let problem = Problem::new(&dataset, graph.as_ref(), &spec)?;
    let parse = |key: &str| -> CliResult<usize> {
        manifest
            .setting(key)?
            .parse()
            .map_err(|_| CliError::Manifest(format!("bad setting `{key}`")))
    };
    let config = MCMCConfig {
        num_chains: parse("chains")?,
        iterations: parse("iters")?,
        burn_in: parse("burnin")?,
        thin: parse("thin")?,
        base_seed: manifest.seed.unwrap_or_default(),
        ..MCMCConfig::default()
    };
    let samples = PosteriorSamples::read_csv_dir(&problem, config, dir.join(SAMPLES_DIR))?;
    Ok(LoadedFit {
        name: spec.family.name().to_string(),
        dir: dir.to_path_buf(),
        manifest,
        dataset,
        problem,
        samples,
    })
}

/// Loads several fits, renaming duplicates `family#2`, `family#3`, ...
pub fn load_fits(dirs: &[PathBuf]) -> CliResult<Vec<LoadedFit>> {
    let mut fits: Vec<LoadedFit> = Vec::with_capacity(dirs.len());
    for d in dirs {
        let mut f = load_fit(d)?;
        let same = fits
            .iter()
            .filter(|g| g.name == f.name || g.name.starts_with(&format!("{}#", f.name)))
            .count();
        if same > 0 {
            f.name = format!("{}#{}", f.name, same + 1);
        }
        fits.push(f);
    }
    Ok(fits)
}

/// True cell rates from a truth table, restricted to the first
/// `num_quarters` quarters of each region (hold-out fits see fewer).
pub fn truth_rates(path: &Path, num_regions: usize, num_quarters: usize) -> CliResult<Vec<f64>> {
    let truth = saeb::simulate::read_truth_csv(File::open(path)?)?;
    let total = truth.rates.len();
    if num_regions == 0 || total % num_regions != 0 || total / num_regions < num_quarters {
        return Err(CliError::Usage(format!(
            "truth table {} has {total} cells, which does not cover a {num_regions} x {num_quarters} panel",
            path.display()
        )));
    }
    let t_truth = total / num_regions;
    Ok((0..num_regions)
        .flat_map(|j| (0..num_quarters).map(move |t| j * t_truth + t))
        .map(|c| truth.rates[c])
        .collect())
}
