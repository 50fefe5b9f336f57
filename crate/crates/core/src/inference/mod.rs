//! MCMC fitting, posterior summaries, convergence checks and hold-out
//! prediction.

mod config;
mod convergence;
mod posterior;
mod predict;
mod problem;
mod sampler;
mod summary;

use rayon::prelude::*;

pub use config::MCMCConfig;
pub use convergence::{effective_sample_size, mcse_mean, psrf};
pub use posterior::{parameter_names, ParameterKind, PosteriorSamples};
pub use predict::{predict_holdout, HoldoutPrediction};
pub use problem::{observation_targets, Problem};
pub use sampler::AcceptanceRates;
pub use summary::{
    cell_means, coefficient_draws, summarize, summarize_cells, summarize_draws, summarize_on,
    write_cells_csv, CellSummary, CoefficientScale, FitSummary, ParameterSummary,
};

use crate::error::Result;

/// Runs `config.num_chains` independent chains (concurrently) and collects
/// their draws in chain order. Chain `c` is seeded with `base_seed + c`.
pub fn fit(problem: &Problem, config: &MCMCConfig) -> Result<PosteriorSamples> {
    config.validate()?;
    let outputs = (0..config.num_chains)
        .into_par_iter()
        .map(|c| sampler::run_chain(problem, config, c))
        .collect::<Result<Vec<_>>>()?;
    let mut chains = Vec::with_capacity(outputs.len());
    let mut deviance = Vec::with_capacity(outputs.len());
    let mut acceptance = Vec::with_capacity(outputs.len());
    for out in outputs {
        chains.push(out.draws);
        deviance.push(out.deviance);
        acceptance.push(out.acceptance);
    }
    Ok(PosteriorSamples::new(
        problem,
        config.clone(),
        chains,
        deviance,
        acceptance,
    ))
}
