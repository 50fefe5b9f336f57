use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::MCMCConfig;
use super::posterior::PosteriorSamples;
use super::problem::Problem;
use super::summary::{fitted_labels, summarize_cells, CellSummary};
use crate::data::{apply_standardization, PanelDataset, RegionGraph};
use crate::error::{Error, Result};
use crate::likelihood::{mean_from_eta, MeanParameter};
use crate::model::{build_design, EffectIndex, EffectPrior, ModelSpec};

/// Fit on all but the last quarter plus predictive draws for the last one.
#[derive(Debug, Clone)]
pub struct HoldoutPrediction {
    /// The model fitted to quarters `1..T−1`.
    pub problem: Problem,
    pub samples: PosteriorSamples,
    /// One entry per region (and category), all at the held-out quarter.
    pub predictions: Vec<CellSummary>,
}

/// Fits quarters `1..T−1` and predicts the mean parameters of quarter `T`.
///
/// Per posterior draw the temporal effect is extended one step from its
/// prior (RW1: `w2_T ~ N(w2_{T−1}, 1/τ)`), cell-level and i.i.d. temporal
/// effects are drawn fresh, and the result is pushed through the link.
/// `holdout` is the 0-based quarter index and must be the last one.
pub fn predict_holdout(
    dataset: &PanelDataset,
    graph: Option<&RegionGraph>,
    spec: &ModelSpec,
    config: &MCMCConfig,
    holdout: usize,
) -> Result<HoldoutPrediction> {
    let t_all = dataset.num_quarters();
    if holdout + 1 != t_all {
        return Err(Error::spec(format!(
            "only the last quarter ({t_all}) can be held out, not quarter {}",
            holdout + 1
        )));
    }
    if t_all < 2 {
        return Err(Error::spec(
            "hold-out prediction needs at least two quarters",
        ));
    }
    let train = dataset.truncate_quarters(t_all - 1)?;
    let problem = Problem::new(&train, graph, spec)?;
    let samples = super::fit(&problem, config)?;
    let full = match problem.standardization() {
        Some(record) => apply_standardization(dataset, record),
        None => dataset.clone(),
    };
    let design = build_design(&full, &spec.predictor)?;
    let rows: Vec<usize> = (0..design.num_rows())
        .filter(|&i| design.cell(i).1 == holdout)
        .collect();
    let layout = problem.layout();
    let family = problem.family();
    let mut rng = ChaCha8Rng::seed_from_u64(config.base_seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut draws: Vec<Vec<Vec<f64>>> = Vec::with_capacity(samples.total_draws());
    for state in samples.states(&problem) {
        let mut eta = vec![vec![0.0; rows.len()]; layout.num_predictors];
        for (l, eta_l) in eta.iter_mut().enumerate() {
            for (r, &i) in rows.iter().enumerate() {
                eta_l[r] = design.offset(i)
                    + design
                        .row(i)
                        .iter()
                        .zip(&state.coefficients[l])
                        .map(|(x, b)| x * b)
                        .sum::<f64>();
            }
        }
        for (b, block) in layout.blocks.iter().enumerate() {
            let tau = state.precisions[block.precision];
            let sd = 1.0 / tau.sqrt();
            let values = &state.effects[b];
            match block.index {
                EffectIndex::Region => {
                    for (r, &i) in rows.iter().enumerate() {
                        eta[block.predictor][r] += values[design.cell(i).0];
                    }
                }
                EffectIndex::Quarter => {
                    let last = values[values.len() - 1];
                    let z: f64 = rng.sample(StandardNormal);
                    let next = match block.prior {
                        EffectPrior::Rw1 => last + sd * z,
                        EffectPrior::Ar1 { rho } => rho * last + sd * z,
                        EffectPrior::Iid | EffectPrior::Icar => sd * z,
                    };
                    for e in eta[block.predictor].iter_mut() {
                        *e += next;
                    }
                }
                EffectIndex::Cell => {
                    for e in eta[block.predictor].iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *e += sd * z;
                    }
                }
            }
        }
        let per_cell = (0..rows.len())
            .map(|r| {
                let e: Vec<f64> = eta.iter().map(|x| x[r]).collect();
                match mean_from_eta(family, &e, state.dispersion) {
                    Some(MeanParameter::Scalar(m)) => vec![m],
                    Some(MeanParameter::Probabilities(p)) => p.to_vec(),
                    None => vec![f64::NAN; fitted_labels(family).len()],
                }
            })
            .collect();
        draws.push(per_cell);
    }
    let cells: Vec<(usize, usize)> = rows.iter().map(|&i| design.cell(i)).collect();
    let predictions = summarize_cells(family, &cells, &draws);
    Ok(HoldoutPrediction {
        problem,
        samples,
        predictions,
    })
}
