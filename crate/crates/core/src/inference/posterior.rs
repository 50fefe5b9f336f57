use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::MCMCConfig;
use super::problem::Problem;
use super::sampler::AcceptanceRates;
use crate::error::{Error, Result};
use crate::model::{EffectIndex, ParameterState};

/// Length of the flat parameter vector.
pub(crate) fn flat_len(p: &Problem) -> usize {
    let layout = &p.layout;
    layout.num_predictors * p.design.num_columns()
        + p.block_rows.iter().map(Vec::len).sum::<usize>()
        + layout.precision_names.len()
        + usize::from(layout.has_dispersion)
}

/// Appends `state` in flat order: coefficients (predictor-major), effect
/// blocks in layout order, precisions, dispersion.
pub(crate) fn flatten_into(state: &ParameterState, out: &mut Vec<f64>) {
    for coef in &state.coefficients {
        out.extend_from_slice(coef);
    }
    for e in &state.effects {
        out.extend_from_slice(e);
    }
    out.extend_from_slice(&state.precisions);
    if let Some(phi) = state.dispersion {
        out.push(phi);
    }
}

fn unflatten(p: &Problem, row: &[f64]) -> ParameterState {
    let k = p.design.num_columns();
    let mut at = 0;
    let mut take = |n: usize| {
        let v = row[at..at + n].to_vec();
        at += n;
        v
    };
    let coefficients = (0..p.layout.num_predictors).map(|_| take(k)).collect();
    let effects = p.block_rows.iter().map(|r| take(r.len())).collect();
    let precisions = take(p.layout.precision_names.len());
    let dispersion = p.layout.has_dispersion.then(|| take(1)[0]);
    ParameterState {
        coefficients,
        effects,
        precisions,
        dispersion,
    }
}

/// Kind of a flat parameter, used to group output files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParameterKind {
    /// Regression coefficient (standardised covariate scale).
    Coefficient,
    /// Entry of effect block `b`.
    Effect(usize),
    Precision,
    Dispersion,
}

/// Names and kinds of the flat parameters of `p`.
pub fn parameter_names(p: &Problem) -> Vec<(String, ParameterKind)> {
    let layout = &p.layout;
    let mut names = Vec::with_capacity(flat_len(p));
    for l in 0..layout.num_predictors {
        for c in 0..p.design.num_columns() {
            names.push((layout.coefficient_label(l, c), ParameterKind::Coefficient));
        }
    }
    for (b, block) in layout.blocks.iter().enumerate() {
        for pos in 0..p.block_rows[b].len() {
            let label = match block.index {
                EffectIndex::Region | EffectIndex::Quarter => {
                    format!("{}[{}]", block.name, pos + 1)
                }
                EffectIndex::Cell => {
                    let (j, t) = p.design.cell(pos);
                    format!("{}[{},{}]", block.name, j + 1, t + 1)
                }
            };
            names.push((label, ParameterKind::Effect(b)));
        }
    }
    for name in &layout.precision_names {
        names.push((name.clone(), ParameterKind::Precision));
    }
    if layout.has_dispersion {
        names.push(("phi".into(), ParameterKind::Dispersion));
    }
    names
}

/// Thinned post-burn-in draws of every chain, plus per-draw deviance.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    names: Vec<String>,
    kinds: Vec<ParameterKind>,
    /// Per chain, row-major `draws × parameters`.
    chains: Vec<Vec<f64>>,
    deviance: Vec<Vec<f64>>,
    config: MCMCConfig,
    acceptance: Vec<AcceptanceRates>,
}

impl PosteriorSamples {
    pub(crate) fn new(
        problem: &Problem,
        config: MCMCConfig,
        chains: Vec<Vec<f64>>,
        deviance: Vec<Vec<f64>>,
        acceptance: Vec<AcceptanceRates>,
    ) -> Self {
        let (names, kinds) = parameter_names(problem).into_iter().unzip();
        PosteriorSamples {
            names,
            kinds,
            chains,
            deviance,
            config,
            acceptance,
        }
    }

    /// Samples from explicit draws, `states[chain][draw]`. Deviance is
    /// evaluated at every draw and acceptance rates are left at zero.
    pub fn from_states(
        problem: &Problem,
        config: MCMCConfig,
        states: &[Vec<ParameterState>],
    ) -> Result<Self> {
        let width = flat_len(problem);
        let draws = states.first().map_or(0, Vec::len);
        let mut chains = Vec::with_capacity(states.len());
        let mut deviance = Vec::with_capacity(states.len());
        for chain in states {
            if chain.len() != draws {
                return Err(Error::spec("every chain needs the same number of draws"));
            }
            let mut flat = Vec::with_capacity(width * draws);
            for s in chain {
                flatten_into(s, &mut flat);
                if flat.len() % width != 0 {
                    return Err(Error::spec(
                        "parameter state does not match the model layout",
                    ));
                }
            }
            if flat.len() != width * draws {
                return Err(Error::spec(
                    "parameter state does not match the model layout",
                ));
            }
            chains.push(flat);
            deviance.push(chain.iter().map(|s| problem.deviance(s)).collect());
        }
        let acceptance = vec![AcceptanceRates::default(); states.len()];
        Ok(Self::new(problem, config, chains, deviance, acceptance))
    }

    pub fn config(&self) -> &MCMCConfig {
        &self.config
    }

    pub fn num_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.deviance.first().map_or(0, Vec::len)
    }

    pub fn total_draws(&self) -> usize {
        self.deviance.iter().map(Vec::len).sum()
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn parameter_kinds(&self) -> &[ParameterKind] {
        &self.kinds
    }

    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Acceptance rates after burn-in, one entry per chain.
    pub fn acceptance(&self) -> &[AcceptanceRates] {
        &self.acceptance
    }

    /// Draws of flat parameter `index`, one vector per chain.
    pub fn chain_draws(&self, index: usize) -> Vec<Vec<f64>> {
        let width = self.names.len();
        self.chains
            .iter()
            .map(|c| c.iter().skip(index).step_by(width).copied().collect())
            .collect()
    }

    /// Draws of a named parameter, one vector per chain.
    pub fn draws(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        self.parameter_index(name).map(|i| self.chain_draws(i))
    }

    /// All chains concatenated.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        self.draws(name).map(|d| d.concat())
    }

    pub fn deviance(&self) -> &[Vec<f64>] {
        &self.deviance
    }

    /// Flat draw `draw` of chain `chain`.
    pub fn row(&self, chain: usize, draw: usize) -> &[f64] {
        let w = self.names.len();
        &self.chains[chain][draw * w..(draw + 1) * w]
    }

    /// Draw `draw` of chain `chain` as a parameter state.
    pub fn state(&self, problem: &Problem, chain: usize, draw: usize) -> ParameterState {
        unflatten(problem, self.row(chain, draw))
    }

    /// Every draw, chain by chain.
    pub fn states<'a>(&'a self, problem: &'a Problem) -> impl Iterator<Item = ParameterState> + 'a {
        (0..self.num_chains())
            .flat_map(move |c| (0..self.draws_per_chain()).map(move |d| self.state(problem, c, d)))
    }

    /// Posterior mean of every parameter (effects included).
    pub fn mean_state(&self, problem: &Problem) -> ParameterState {
        let w = self.names.len();
        let first = self.row(0, 0).to_vec();
        let mut sum = vec![0.0; w];
        let mut n = 0.0;
        for chain in &self.chains {
            for row in chain.chunks_exact(w) {
                for ((s, v), x0) in sum.iter_mut().zip(row).zip(&first) {
                    *s += v - x0;
                }
                n += 1.0;
            }
        }
        let mean: Vec<f64> = sum.iter().zip(&first).map(|(s, x0)| x0 + s / n).collect();
        unflatten(problem, &mean)
    }

    /// Writes one CSV per parameter group (`coefficients.csv`,
    /// `hyperparameters.csv`, `effects_<block>.csv`) plus `deviance.csv`.
    /// Values are written in shortest round-trip form, so reading them back
    /// reproduces the draws bit for bit.
    pub fn write_csv_dir(&self, problem: &Problem, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (file, columns) in self.file_groups(problem) {
            let path = dir.join(&file);
            let mut out = BufWriter::new(File::create(&path)?);
            write!(out, "chain,draw")?;
            for &c in &columns {
                write!(out, ",{}", csv_field(&self.names[c]))?;
            }
            writeln!(out)?;
            for chain in 0..self.num_chains() {
                for draw in 0..self.draws_per_chain() {
                    let row = self.row(chain, draw);
                    write!(out, "{},{}", chain + 1, draw + 1)?;
                    for &c in &columns {
                        write!(out, ",{}", row[c])?;
                    }
                    writeln!(out)?;
                }
            }
            out.flush()?;
            written.push(path);
        }
        let path = dir.join("deviance.csv");
        let mut out = BufWriter::new(File::create(&path)?);
        writeln!(out, "chain,draw,deviance")?;
        for (chain, dev) in self.deviance.iter().enumerate() {
            for (draw, d) in dev.iter().enumerate() {
                writeln!(out, "{},{},{}", chain + 1, draw + 1, d)?;
            }
        }
        out.flush()?;
        written.push(path);
        Ok(written)
    }

    /// Reads draws written by [`PosteriorSamples::write_csv_dir`] for the
    /// same problem. Column headers must match the problem's parameters.
    pub fn read_csv_dir(
        problem: &Problem,
        config: MCMCConfig,
        dir: impl AsRef<Path>,
    ) -> Result<Self> {
        let dir = dir.as_ref();
        let (names, kinds): (Vec<String>, Vec<ParameterKind>) =
            parameter_names(problem).into_iter().unzip();
        let width = names.len();
        let mut skeleton = PosteriorSamples {
            names,
            kinds,
            chains: Vec::new(),
            deviance: Vec::new(),
            config,
            acceptance: Vec::new(),
        };
        let dev = read_table(&dir.join("deviance.csv"), &["deviance".to_string()])?;
        let num_chains = dev.iter().map(|r| r.0).max().unwrap_or(0);
        let mut deviance = vec![Vec::new(); num_chains];
        for (chain, _, values) in &dev {
            deviance[chain - 1].push(values[0]);
        }
        let draws = deviance.first().map_or(0, Vec::len);
        if deviance.iter().any(|d| d.len() != draws) {
            return Err(Error::Diagnostics("chains have unequal lengths".into()));
        }
        let mut chains = vec![vec![f64::NAN; draws * width]; num_chains];
        for (file, columns) in skeleton.file_groups(problem) {
            let expected: Vec<String> =
                columns.iter().map(|&c| skeleton.names[c].clone()).collect();
            for (chain, draw, values) in read_table(&dir.join(&file), &expected)? {
                if chain == 0 || chain > num_chains || draw == 0 || draw > draws {
                    return Err(Error::Diagnostics(format!(
                        "{file}: draw ({chain}, {draw}) out of range"
                    )));
                }
                let row = &mut chains[chain - 1][(draw - 1) * width..draw * width];
                for (&c, v) in columns.iter().zip(values) {
                    row[c] = v;
                }
            }
        }
        if chains.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::Diagnostics(
                "sample files do not cover every draw".into(),
            ));
        }
        skeleton.chains = chains;
        skeleton.deviance = deviance;
        Ok(skeleton)
    }

    fn file_groups(&self, problem: &Problem) -> Vec<(String, Vec<usize>)> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        let mut push = |file: String, i: usize| match groups.iter_mut().find(|(f, _)| *f == file) {
            Some((_, cols)) => cols.push(i),
            None => groups.push((file, vec![i])),
        };
        for (i, kind) in self.kinds.iter().enumerate() {
            let file = match kind {
                ParameterKind::Coefficient => "coefficients.csv".to_string(),
                ParameterKind::Precision | ParameterKind::Dispersion => {
                    "hyperparameters.csv".to_string()
                }
                ParameterKind::Effect(b) => {
                    let name: String = problem.layout.blocks[*b]
                        .name
                        .chars()
                        .map(|ch| if ch.is_ascii_alphanumeric() { ch } else { '_' })
                        .collect();
                    format!("effects_{}.csv", name.trim_end_matches('_'))
                }
            };
            push(file, i);
        }
        groups
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

type Row = (usize, usize, Vec<f64>);

fn read_table(path: &Path, expected: &[String]) -> Result<Vec<Row>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header.len() != expected.len() + 2
        || header[0] != "chain"
        || header[1] != "draw"
        || header[2..] != *expected
    {
        return Err(Error::Diagnostics(format!(
            "{}: columns do not match the model",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: line + 2,
            message: message.into(),
        };
        let chain = record[0].parse().map_err(|_| bad("bad chain index"))?;
        let draw = record[1].parse().map_err(|_| bad("bad draw index"))?;
        let values = record
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<Vec<_>>>()?;
        rows.push((chain, draw, values));
    }
    Ok(rows)
}
