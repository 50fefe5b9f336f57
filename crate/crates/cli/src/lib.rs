//! Library behind the `saeb` command: simulate panels, fit models, diagnose
//! and compare fits, replay recorded runs.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod scenario;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "saeb",
    version,
    about = "Bayesian small-area estimation for labour-market panels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic panel, adjacency and truth table.
    Simulate(SimulateArgs),
    /// Fit a model by MCMC and write posterior summaries and draws.
    Fit(FitArgs),
    /// DIC, CPO, PIT, log score and per-region RRMSE of one or more fits.
    Diagnose(DiagnoseArgs),
    /// Per-region model and direct estimates side by side.
    Compare(CompareArgs),
    /// Re-run a recorded command and check its outputs are byte-identical.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// poisson, negbin, binomial, beta or multinomial.
    #[arg(long, default_value = "binomial")]
    pub family: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Dispersion of the negative binomial or beta family.
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub regions: Option<usize>,
    #[arg(long)]
    pub quarters: Option<usize>,
    /// Scenario file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Adjacency to simulate on instead of the built-in graph.
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// Region adjacency (required for structured spatial effects).
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// Model specification file of `key = value` lines.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Likelihood family; overrides the spec file's.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 20240101)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 20000)]
    pub iters: usize,
    #[arg(long, default_value_t = 5000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 5)]
    pub thin: usize,
    /// Fit all but the last quarter and predict it.
    #[arg(long)]
    pub holdout_last_quarter: bool,
    /// Fixed effects above this R̂ make the run exit with status 3.
    #[arg(long, default_value_t = 1.1)]
    pub psrf_threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    /// Output directory of a `fit` run (repeatable).
    #[arg(long = "fit", required = true)]
    pub fits: Vec<PathBuf>,
    /// Truth table from `simulate`, for simulation-mode RRMSE.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Report CPO, PIT and log score as unavailable for multinomial fits.
    #[arg(long)]
    pub skip_multinomial_cpo: bool,
    /// Randomised instead of mid-PIT for discrete families.
    #[arg(long)]
    pub randomized_pit: bool,
    /// Seed of the randomised PIT.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Score beta fits on the count scale (density of y/m divided by m).
    #[arg(long)]
    pub count_scale: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Output directory of a `fit` run (repeatable).
    #[arg(long = "fit", required = true)]
    pub fits: Vec<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Manifest of the run to replay.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the replayed outputs (default: `<run dir>.replay`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Whether a command completed with all convergence checks passing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    NotConverged,
}

/// Seed override from `SAEB_SEED`, if set.
pub fn seed_from_env() -> CliResult<Option<u64>> {
    match std::env::var("SAEB_SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            CliError::Usage(format!("SAEB_SEED must be an unsigned integer, got `{v}`"))
        }),
        Err(_) => Ok(None),
    }
}

/// Parses `argv` (program name first) and runs it without a seed override.
pub fn run_args<I, T>(argv: I) -> CliResult<Outcome>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli, None)
}

/// Runs a parsed command. `seed_override` replaces the command's seed.
pub fn run(cli: Cli, seed_override: Option<u64>) -> CliResult<Outcome> {
    match cli.command {
        Command::Simulate(mut a) => {
            if let Some(s) = seed_override {
                a.seed = s;
            }
            commands::simulate::run(&a)
        }
        Command::Fit(mut a) => {
            if let Some(s) = seed_override {
                a.seed = s;
            }
            commands::fit::run(&a)
        }
        Command::Diagnose(mut a) => {
            if let Some(s) = seed_override {
                a.seed = s;
            }
            commands::diagnose::run(&a)
        }
        Command::Compare(a) => commands::compare::run(&a),
        Command::Replay(a) => commands::replay::run(&a),
    }
}
