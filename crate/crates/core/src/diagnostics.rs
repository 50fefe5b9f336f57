//! Model comparison and checking: DIC, CPO, PIT, log score, RRMSE and the
//! design-based direct estimator.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::inference::{psrf, PosteriorSamples, Problem};
use crate::likelihood::{mean_from_eta, predictive_cdf, MeanParameter, ObservationTarget};
use crate::model::{Family, ParameterState};
use crate::stats;

/// Minimum pooled draws for the CPO / PIT estimators.
pub const MIN_CPO_DRAWS: usize = 500;

/// Relative Monte-Carlo error above which a CPO value is flagged.
pub const CPO_MC_ERROR_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dic {
    pub dic: f64,
    pub p_d: f64,
    pub d_bar: f64,
    /// Draws with a non-finite deviance, left out of `d_bar`.
    pub excluded: usize,
}

impl Dic {
    /// `dic = d_bar + p_d`.
    pub fn from_parts(d_bar: f64, p_d: f64) -> Self {
        Dic {
            dic: d_bar + p_d,
            p_d,
            d_bar,
            excluded: 0,
        }
    }
}

/// `D̄` is the mean stored deviance; `p_D = D̄ − D(θ̄)` with every
/// parameter (latent effects included) at its posterior mean.
pub fn dic(samples: &PosteriorSamples, problem: &Problem) -> Result<Dic> {
    let all: Vec<f64> = samples.deviance().concat();
    if all.is_empty() {
        return Err(Error::Diagnostics("no deviance draws".into()));
    }
    let finite: Vec<f64> = all.iter().copied().filter(|d| d.is_finite()).collect();
    let excluded = all.len() - finite.len();
    if excluded as f64 > 0.01 * all.len() as f64 {
        return Err(Error::Diagnostics(format!(
            "{excluded} of {} deviance draws are not finite",
            all.len()
        )));
    }
    let d0 = finite[0];
    let d_bar = d0 + stats::mean(&finite.iter().map(|d| d - d0).collect::<Vec<_>>());
    let d_hat = problem.deviance(&samples.mean_state(problem));
    if !d_hat.is_finite() {
        return Err(Error::Diagnostics(
            "deviance at the posterior mean is not finite".into(),
        ));
    }
    let mut out = Dic::from_parts(d_bar, d_bar - d_hat);
    out.excluded = excluded;
    Ok(out)
}

/// Leave-one-out predictive checks of every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpo {
    /// Harmonic-mean CPO; 0 when some draw gives the observation zero
    /// probability, `NaN` for missing cells.
    pub values: Vec<f64>,
    /// Relative Monte-Carlo error of each estimate.
    pub relative_error: Vec<f64>,
    /// Cells whose estimate is unreliable or zero.
    pub flagged: Vec<bool>,
}

impl Cpo {
    pub fn num_flagged(&self) -> usize {
        self.flagged.iter().filter(|f| **f).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PitMode {
    /// `P(Y < y) + ½ P(Y = y)` for discrete data.
    Mid,
    /// `P(Y < y) + U · P(Y = y)` with `U ~ U(0,1)` from the given seed.
    Randomized { seed: u64 },
}

/// Per-draw, per-cell log-likelihood, `out[draw][cell]`, draws in chain order.
fn log_likelihood_matrix(samples: &PosteriorSamples, problem: &Problem) -> Vec<Vec<f64>> {
    let per_chain = samples.draws_per_chain();
    (0..samples.total_draws())
        .into_par_iter()
        .map(|s| {
            problem.cell_log_likelihoods(&samples.state(problem, s / per_chain, s % per_chain))
        })
        .collect()
}

/// Normalised importance weights `∝ 1/p(y_i | θ^s)` for one cell, the log
/// harmonic-mean CPO, and its relative Monte-Carlo error.
struct CellWeights {
    log_cpo: f64,
    relative_error: f64,
    /// Some draw has zero likelihood; the weights then sit on those draws.
    zero: bool,
}

fn cell_weights(ll: &[Vec<f64>], i: usize, weights: &mut Vec<f64>) -> Option<CellWeights> {
    weights.clear();
    let neg: Vec<f64> = ll.iter().map(|row| -row[i]).collect();
    if neg.iter().any(|x| x.is_nan()) {
        return None;
    }
    let s = neg.len() as f64;
    if neg.contains(&f64::INFINITY) {
        weights.extend(neg.iter().map(|x| f64::from(*x == f64::INFINITY)));
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        return Some(CellWeights {
            log_cpo: f64::NEG_INFINITY,
            relative_error: f64::INFINITY,
            zero: true,
        });
    }
    let max = neg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    weights.extend(neg.iter().map(|x| (x - max).exp()));
    let total: f64 = weights.iter().sum();
    let mean_w = total / s;
    let var_w = weights.iter().map(|w| (w - mean_w).powi(2)).sum::<f64>() / s;
    let relative_error = (var_w / s).sqrt() / mean_w;
    let log_cpo = -(max + mean_w.ln());
    weights.iter_mut().for_each(|w| *w /= total);
    Some(CellWeights {
        log_cpo,
        relative_error,
        zero: false,
    })
}

fn check_draws(samples: &PosteriorSamples) -> Result<()> {
    if samples.total_draws() < MIN_CPO_DRAWS {
        return Err(Error::Diagnostics(format!(
            "CPO and PIT need at least {MIN_CPO_DRAWS} pooled draws, got {}",
            samples.total_draws()
        )));
    }
    Ok(())
}

fn cpo_from_matrix(ll: &[Vec<f64>], num_cells: usize) -> Cpo {
    let mut values = vec![f64::NAN; num_cells];
    let mut relative_error = vec![f64::NAN; num_cells];
    let mut flagged = vec![false; num_cells];
    let mut w = Vec::new();
    for i in 0..num_cells {
        if let Some(cw) = cell_weights(ll, i, &mut w) {
            values[i] = cw.log_cpo.exp();
            relative_error[i] = cw.relative_error;
            flagged[i] = cw.zero || cw.relative_error > CPO_MC_ERROR_LIMIT;
        }
    }
    Cpo {
        values,
        relative_error,
        flagged,
    }
}

/// Harmonic-mean conditional predictive ordinates, computed in log space.
/// Missing cells get `NaN` and are not flagged.
pub fn cpo(samples: &PosteriorSamples, problem: &Problem) -> Result<Cpo> {
    check_draws(samples)?;
    let ll = mark_missing(log_likelihood_matrix(samples, problem), problem);
    Ok(cpo_from_matrix(&ll, problem.num_cells()))
}

fn mark_missing(mut ll: Vec<Vec<f64>>, problem: &Problem) -> Vec<Vec<f64>> {
    for (i, t) in problem.targets().iter().enumerate() {
        if matches!(t, ObservationTarget::Missing) {
            ll.iter_mut().for_each(|row| row[i] = f64::NAN);
        }
    }
    ll
}

fn mean_parameters(problem: &Problem, state: &ParameterState) -> Vec<Option<MeanParameter>> {
    let eta = problem.linear_predictors(state);
    (0..problem.num_cells())
        .map(|i| {
            let e: Vec<f64> = eta.iter().map(|x| x[i]).collect();
            mean_from_eta(problem.family(), &e, state.dispersion)
        })
        .collect()
}

fn pit_from_matrix(
    samples: &PosteriorSamples,
    problem: &Problem,
    ll: &[Vec<f64>],
    mode: PitMode,
) -> Vec<f64> {
    let n = problem.num_cells();
    let draws = ll.len();
    // weights[cell][draw]
    let mut weights = vec![Vec::new(); n];
    let mut valid = vec![false; n];
    for i in 0..n {
        valid[i] = cell_weights(ll, i, &mut weights[i]).is_some();
    }
    let uniforms: Vec<f64> = match mode {
        PitMode::Mid => vec![0.5; n],
        PitMode::Randomized { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random::<f64>()).collect()
        }
    };
    let per_chain = samples.draws_per_chain();
    let family = problem.family();
    let targets = problem.targets();
    let chunk = 256;
    let partial: Vec<Vec<f64>> = (0..draws.div_ceil(chunk))
        .into_par_iter()
        .map(|k| {
            let mut acc = vec![0.0; n];
            for s in k * chunk..((k + 1) * chunk).min(draws) {
                let state = problem_state(samples, problem, s, per_chain);
                let means = mean_parameters(problem, &state);
                for i in 0..n {
                    if !valid[i] || weights[i][s] == 0.0 {
                        continue;
                    }
                    let value = match means[i] {
                        Some(mean) => {
                            let (below, at) =
                                predictive_cdf(family, &targets[i], mean, state.dispersion);
                            below + uniforms[i] * at
                        }
                        None => 0.5,
                    };
                    acc[i] += weights[i][s] * value;
                }
            }
            acc
        })
        .collect();
    (0..n)
        .map(|i| {
            if valid[i] {
                partial.iter().map(|p| p[i]).sum::<f64>().clamp(0.0, 1.0)
            } else {
                f64::NAN
            }
        })
        .collect()
}

fn problem_state(
    samples: &PosteriorSamples,
    problem: &Problem,
    s: usize,
    per_chain: usize,
) -> ParameterState {
    samples.state(problem, s / per_chain, s % per_chain)
}

/// Leave-one-out PIT values with the CPO importance weights; `NaN` for
/// missing cells.
pub fn pit(samples: &PosteriorSamples, problem: &Problem, mode: PitMode) -> Result<Vec<f64>> {
    check_draws(samples)?;
    let ll = mark_missing(log_likelihood_matrix(samples, problem), problem);
    Ok(pit_from_matrix(samples, problem, &ll, mode))
}

/// CPO and PIT sharing one pass over the log-likelihood matrix.
pub fn cpo_and_pit(
    samples: &PosteriorSamples,
    problem: &Problem,
    mode: PitMode,
) -> Result<(Cpo, Vec<f64>)> {
    check_draws(samples)?;
    let ll = mark_missing(log_likelihood_matrix(samples, problem), problem);
    let cpo = cpo_from_matrix(&ll, problem.num_cells());
    let pit = pit_from_matrix(samples, problem, &ll, mode);
    Ok((cpo, pit))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogScore {
    pub value: f64,
    /// Zero CPO values left out of the mean.
    pub excluded_zero: usize,
    /// Missing (`NaN`) values skipped.
    pub missing: usize,
}

/// `−(1/N) Σ log CPO_i` over the positive entries.
pub fn log_score(cpo: &[f64]) -> Result<LogScore> {
    let missing = cpo.iter().filter(|c| c.is_nan()).count();
    let positive: Vec<f64> = cpo.iter().copied().filter(|c| *c > 0.0).collect();
    let excluded_zero = cpo.len() - missing - positive.len();
    if positive.is_empty() {
        return Err(Error::Diagnostics(
            "log score needs at least one positive CPO".into(),
        ));
    }
    let value = -positive.iter().map(|c| c.ln()).sum::<f64>() / positive.len() as f64;
    Ok(LogScore {
        value,
        excluded_zero,
        missing,
    })
}

/// CPO values on the scale of the unemployed count: beta densities of the
/// rate `y/m` are divided by `m`, so they are comparable with discrete
/// probabilities of `y`. Other families are returned unchanged.
pub fn count_scale_cpo(family: Family, dataset: &PanelDataset, cpo: &[f64]) -> Vec<f64> {
    match family {
        Family::Beta => cpo
            .iter()
            .zip(dataset.observations())
            .map(|(c, o)| c / o.active() as f64)
            .collect(),
        _ => cpo.to_vec(),
    }
}

/// Split-chain R̂ of every flat parameter that has one.
pub fn psrf_table(samples: &PosteriorSamples) -> Vec<(String, f64)> {
    samples
        .parameter_names()
        .iter()
        .enumerate()
        .filter_map(|(i, name)| {
            psrf(&samples.chain_draws(i))
                .ok()
                .map(|r| (name.clone(), r))
        })
        .collect()
}

/// Direct (design-based) estimate of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectEstimate {
    pub region: usize,
    pub quarter: usize,
    /// Weighted unemployed total.
    pub total_unemployed: f64,
    pub rate: f64,
    pub variance: f64,
    /// `√variance / rate`; infinite when the rate is 0.
    pub rrmse: f64,
    /// No active sample in the cell; the other fields are `NaN`.
    pub missing: bool,
}

/// Ratio estimator of each cell's unemployment rate. With a single design
/// weight per cell the weighted ratio reduces to `y / m`; its linearised
/// variance over the `n` sampled persons is `n/(n−1) · R(1−R)/m`.
pub fn direct_estimate(dataset: &PanelDataset) -> Vec<DirectEstimate> {
    dataset
        .observations()
        .iter()
        .map(|o| {
            let m = o.active();
            if m == 0 {
                return DirectEstimate {
                    region: o.region,
                    quarter: o.quarter,
                    total_unemployed: f64::NAN,
                    rate: f64::NAN,
                    variance: f64::NAN,
                    rrmse: f64::NAN,
                    missing: true,
                };
            }
            let (y, m, n) = (o.unemployed as f64, m as f64, o.sample_size() as f64);
            let rate = (o.weight * y) / (o.weight * m);
            let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            let variance = (correction * rate * (1.0 - rate) / m).max(0.0);
            let rrmse = if rate > 0.0 {
                variance.sqrt() / rate
            } else {
                f64::INFINITY
            };
            DirectEstimate {
                region: o.region,
                quarter: o.quarter,
                total_unemployed: o.weight * y,
                rate,
                variance,
                rrmse,
                missing: false,
            }
        })
        .collect()
}

/// Unemployment rate of every cell at every draw, `out[draw][cell]`.
///
/// Count families divide `μ` by the observed active sample `m`; the
/// multinomial uses `P_unemployed / (P_employed + P_unemployed)`.
pub fn rate_draws(
    samples: &PosteriorSamples,
    problem: &Problem,
    dataset: &PanelDataset,
) -> Vec<Vec<f64>> {
    let per_chain = samples.draws_per_chain();
    let active: Vec<f64> = dataset
        .observations()
        .iter()
        .map(|o| o.active() as f64)
        .collect();
    (0..samples.total_draws())
        .into_par_iter()
        .map(|s| {
            let state = problem_state(samples, problem, s, per_chain);
            mean_parameters(problem, &state)
                .into_iter()
                .zip(&active)
                .map(|(mean, m)| rate_of(problem.family(), mean, *m))
                .collect()
        })
        .collect()
}

/// Unemployment rate implied by a cell's mean parameter.
pub fn rate_of(family: Family, mean: Option<MeanParameter>, active: f64) -> f64 {
    match (family, mean) {
        (Family::Poisson | Family::NegativeBinomial, Some(MeanParameter::Scalar(mu))) => {
            if active > 0.0 {
                mu / active
            } else {
                f64::NAN
            }
        }
        (_, Some(MeanParameter::Scalar(r))) => r,
        (_, Some(MeanParameter::Probabilities(p))) => p[1] / (p[0] + p[1]),
        (_, None) => f64::NAN,
    }
}

/// Posterior mean and sd of each cell's unemployment rate.
pub fn rate_summary(draws: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let cells = draws.first().map_or(0, Vec::len);
    (0..cells)
        .map(|i| {
            let xs: Vec<f64> = draws
                .iter()
                .map(|d| d[i])
                .filter(|x| x.is_finite())
                .collect();
            (stats::mean(&xs), stats::std_dev(&xs))
        })
        .collect()
}

/// 95% interval of each region's quarter-averaged rate from per-draw cell
/// rates (`draws[draw][cell]`, region-major cells).
pub fn region_rate_intervals(
    draws: &[Vec<f64>],
    num_regions: usize,
    num_quarters: usize,
) -> Vec<(f64, f64)> {
    (0..num_regions)
        .map(|j| {
            let mut avg: Vec<f64> = draws
                .iter()
                .map(|d| {
                    d[j * num_quarters..(j + 1) * num_quarters]
                        .iter()
                        .sum::<f64>()
                        / num_quarters as f64
                })
                .filter(|x| x.is_finite())
                .collect();
            avg.sort_by(f64::total_cmp);
            (
                stats::quantile_sorted(&avg, 0.025),
                stats::quantile_sorted(&avg, 0.975),
            )
        })
        .collect()
}

/// 95% normal interval of each region's quarter-averaged direct rate.
pub fn direct_region_intervals(
    direct: &[DirectEstimate],
    num_regions: usize,
    num_quarters: usize,
) -> Vec<(f64, f64)> {
    (0..num_regions)
        .map(|j| {
            let cells: Vec<&DirectEstimate> = direct[j * num_quarters..(j + 1) * num_quarters]
                .iter()
                .filter(|d| !d.missing)
                .collect();
            if cells.is_empty() {
                return (f64::NAN, f64::NAN);
            }
            let k = cells.len() as f64;
            let mean = cells.iter().map(|d| d.rate).sum::<f64>() / k;
            let sd = (cells.iter().map(|d| d.variance).sum::<f64>() / (k * k)).sqrt();
            (mean - 1.959963984540054 * sd, mean + 1.959963984540054 * sd)
        })
        .collect()
}

/// Simulation-mode RRMSE: `√mean((estimate − truth)²) / mean(truth)` over
/// paired replicates. `None` when the truth is zero or nothing is finite.
pub fn rrmse_against_truth(estimates: &[f64], truth: &[f64]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (*e, *t))
        .filter(|(e, t)| e.is_finite() && t.is_finite())
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let mse = pairs.iter().map(|(e, t)| (e - t).powi(2)).sum::<f64>() / n;
    let truth_mean = pairs.iter().map(|(_, t)| t).sum::<f64>() / n;
    (truth_mean != 0.0).then(|| mse.sqrt() / truth_mean.abs())
}

/// Posterior-only RRMSE `sd / mean` (variability only).
pub fn rrmse_posterior(mean: f64, sd: f64) -> Option<f64> {
    (mean != 0.0 && mean.is_finite()).then(|| sd / mean.abs())
}

/// Region-level estimate and RRMSE for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionEstimate {
    pub region: usize,
    pub method: String,
    /// Mean over quarters of the cell rate estimates.
    pub estimate: f64,
    /// Mean over quarters of the cell RRMSE (`NaN` if unavailable).
    pub rrmse: f64,
    /// Mean over quarters of the true rate, when known.
    pub truth: Option<f64>,
}

/// Cell-level estimates `(rate, rrmse)` in region-major order collapsed to
/// one row per region. When `truth` is given, RRMSE is measured against it
/// over the region's quarters instead.
pub fn region_estimates(
    method: &str,
    num_regions: usize,
    num_quarters: usize,
    cells: &[(f64, f64)],
    truth: Option<&[f64]>,
) -> Vec<RegionEstimate> {
    (0..num_regions)
        .map(|j| {
            let slice = &cells[j * num_quarters..(j + 1) * num_quarters];
            let finite = |xs: Vec<f64>| {
                let xs: Vec<f64> = xs.into_iter().filter(|x| x.is_finite()).collect();
                if xs.is_empty() {
                    f64::NAN
                } else {
                    stats::mean(&xs)
                }
            };
            let estimate = finite(slice.iter().map(|c| c.0).collect());
            let region_truth = truth.map(|t| &t[j * num_quarters..(j + 1) * num_quarters]);
            let rrmse = match region_truth {
                Some(t) => {
                    let est: Vec<f64> = slice.iter().map(|c| c.0).collect();
                    rrmse_against_truth(&est, t).unwrap_or(f64::NAN)
                }
                None => finite(slice.iter().map(|c| c.1).collect()),
            };
            RegionEstimate {
                region: j,
                method: method.to_string(),
                estimate,
                rrmse,
                truth: region_truth.map(|t| finite(t.to_vec())),
            }
        })
        .collect()
}

/// Everything `diagnose` reports for one fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub model: String,
    pub family: Family,
    pub dic: Dic,
    /// `None` when CPO is not reported for the model.
    pub cpo: Option<Cpo>,
    pub pit: Option<Vec<f64>>,
    pub log_score: Option<LogScore>,
    pub psrf_table: Vec<(String, f64)>,
    pub regions: Vec<RegionEstimate>,
}

/// Options for [`diagnose`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseOptions {
    pub model: String,
    pub pit_mode: PitMode,
    /// Skip CPO, PIT and log score.
    pub skip_cpo: bool,
    /// Report beta log scores on the count scale.
    pub count_scale: bool,
    /// True cell rates, region-major, for simulation-mode RRMSE.
    pub truth: Option<Vec<f64>>,
}

pub fn diagnose(
    samples: &PosteriorSamples,
    problem: &Problem,
    dataset: &PanelDataset,
    options: &DiagnoseOptions,
) -> Result<DiagnosticsReport> {
    let dic = dic(samples, problem)?;
    let (cpo, pit, log_score) = if options.skip_cpo {
        (None, None, None)
    } else {
        let (cpo, pit) = cpo_and_pit(samples, problem, options.pit_mode)?;
        let scored = if options.count_scale {
            count_scale_cpo(problem.family(), dataset, &cpo.values)
        } else {
            cpo.values.clone()
        };
        let score = log_score(&scored)?;
        (Some(cpo), Some(pit), Some(score))
    };
    let rates = rate_summary(&rate_draws(samples, problem, dataset));
    let cells: Vec<(f64, f64)> = rates
        .iter()
        .map(|(m, sd)| (*m, rrmse_posterior(*m, *sd).unwrap_or(f64::NAN)))
        .collect();
    let regions = region_estimates(
        &options.model,
        dataset.num_regions(),
        dataset.num_quarters(),
        &cells,
        options.truth.as_deref(),
    );
    Ok(DiagnosticsReport {
        model: options.model.clone(),
        family: problem.family(),
        dic,
        cpo,
        pit,
        log_score,
        psrf_table: psrf_table(samples),
        regions,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `model,family,dic,p_d,d_bar,log_score,cpo_flagged,cpo_zero,max_psrf`,
/// one row per report.
pub fn write_summary_csv(reports: &[DiagnosticsReport], mut out: impl Write) -> Result<()> {
    writeln!(
        out,
        "model,family,dic,p_d,d_bar,log_score,cpo_flagged,cpo_zero,max_psrf"
    )?;
    for r in reports {
        let max_psrf = r
            .psrf_table
            .iter()
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.model,
            r.family.name(),
            r.dic.dic,
            r.dic.p_d,
            r.dic.d_bar,
            opt(r.log_score.map(|s| s.value)),
            r.cpo
                .as_ref()
                .map(|c| c.num_flagged().to_string())
                .unwrap_or_default(),
            opt(r.log_score.map(|s| s.excluded_zero as f64)),
            opt(max_psrf.is_finite().then_some(max_psrf)),
        )?;
    }
    Ok(())
}

/// Header of [`write_observations_rows`].
pub const OBSERVATIONS_HEADER: &str = "model,region,quarter,cpo,pit,flagged";

/// `model,region,quarter,cpo,pit,flagged` rows with 1-based ids; empty
/// fields when CPO was not computed (no header).
pub fn write_observations_rows(
    report: &DiagnosticsReport,
    cells: &[(usize, usize)],
    mut out: impl Write,
) -> Result<()> {
    for (i, (j, t)) in cells.iter().enumerate() {
        let (cpo, flag) = match &report.cpo {
            Some(c) => (c.values[i].to_string(), u8::from(c.flagged[i]).to_string()),
            None => (String::new(), String::new()),
        };
        let pit = report
            .pit
            .as_ref()
            .map(|p| p[i].to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            report.model,
            j + 1,
            t + 1,
            cpo,
            pit,
            flag
        )?;
    }
    Ok(())
}

/// `region,method,estimate,rrmse,truth` with 1-based region ids.
pub fn write_regions_csv(rows: &[RegionEstimate], mut out: impl Write) -> Result<()> {
    writeln!(out, "region,method,estimate,rrmse,truth")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.region + 1,
            r.method,
            r.estimate,
            r.rrmse,
            opt(r.truth)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PanelObservation;

    fn obs(y: u64, e: u64, i: u64) -> PanelObservation {
        PanelObservation {
            region: 0,
            quarter: 0,
            unemployed: y,
            employed: e,
            inactive: i,
            weight: 1.0,
        }
    }

    fn one_cell(o: PanelObservation) -> PanelDataset {
        PanelDataset::new(
            1,
            1,
            vec![o],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn dic_identity_from_parts() {
        let d = Dic::from_parts(2210.0, 30.4);
        assert!((d.dic - 2240.4).abs() < 1e-9);
        let d = Dic::from_parts(-1638.4, 31.1);
        assert!((d.dic + 1607.3).abs() < 1e-9);
    }

    #[test]
    fn log_score_examples() {
        let e = (-1.0f64).exp();
        assert!((log_score(&[e, e]).unwrap().value - 1.0).abs() < 1e-15);
        assert_eq!(log_score(&[1.0]).unwrap().value, 0.0);
        let s = log_score(&[0.0, 0.5, f64::NAN]).unwrap();
        assert_eq!((s.excluded_zero, s.missing), (1, 1));
        assert!(matches!(log_score(&[0.0, 0.0]), Err(Error::Diagnostics(_))));
    }

    #[test]
    fn direct_estimate_examples() {
        let d = direct_estimate(&one_cell(obs(5, 45, 10)));
        assert!((d[0].rate - 0.1).abs() < 1e-15);
        let d = direct_estimate(&one_cell(obs(20, 0, 5)));
        assert_eq!((d[0].rate, d[0].variance), (1.0, 0.0));
        let d = direct_estimate(&one_cell(obs(0, 0, 5)));
        assert!(d[0].missing);
    }

    #[test]
    fn rrmse_definitions() {
        assert_eq!(rrmse_against_truth(&[0.2, 0.3], &[0.2, 0.3]), Some(0.0));
        assert_eq!(rrmse_against_truth(&[0.0], &[0.0]), None);
        assert_eq!(rrmse_posterior(0.5, 0.05), Some(0.1));
    }

    #[test]
    fn zero_probability_draw_gives_zero_cpo() {
        let ll = vec![vec![-1.0], vec![f64::NEG_INFINITY], vec![-2.0]];
        let c = cpo_from_matrix(&ll, 1);
        assert_eq!(c.values[0], 0.0);
        assert!(c.flagged[0]);
    }

    #[test]
    fn constant_draws_give_the_likelihood() {
        let ll = vec![vec![-1.25]; 600];
        let c = cpo_from_matrix(&ll, 1);
        assert!((c.values[0] - (-1.25f64).exp()).abs() < 1e-15);
        assert_eq!(c.relative_error[0], 0.0);
    }
}
