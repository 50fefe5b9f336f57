use std::io::Write;

use super::convergence::psrf;
use super::posterior::{ParameterKind, PosteriorSamples};
use super::problem::Problem;
use crate::error::Result;
use crate::likelihood::{mean_from_eta, MeanParameter};
use crate::model::{Family, ParameterState};
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub psrf: Option<f64>,
}

/// Posterior of one cell-level mean parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    /// 0-based region and quarter.
    pub region: usize,
    pub quarter: usize,
    /// `mu`, `R`, or `P[category]`.
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub parameters: Vec<ParameterSummary>,
    pub fitted: Vec<CellSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientScale {
    /// Coefficients of the covariates as supplied.
    Raw,
    /// Coefficients of the standardised covariates the sampler works with.
    Standardized,
}

/// Mean, sd and type-7 2.5% / 97.5% quantiles of pooled draws.
pub fn summarize_draws(name: &str, chains: &[Vec<f64>]) -> ParameterSummary {
    let mut pooled: Vec<f64> = chains.concat();
    // shift by the first draw so constant draws summarise exactly
    let x0 = pooled.first().copied().unwrap_or(f64::NAN);
    let shifted: Vec<f64> = pooled.iter().map(|x| x - x0).collect();
    let mean = x0 + stats::mean(&shifted);
    let sd = stats::std_dev(&shifted);
    pooled.sort_by(f64::total_cmp);
    ParameterSummary {
        name: name.to_string(),
        mean,
        sd,
        q025: stats::quantile_sorted(&pooled, 0.025),
        q975: stats::quantile_sorted(&pooled, 0.975),
        psrf: psrf(chains).ok(),
    }
}

/// Coefficient draws per chain, `out[predictor][column][chain][draw]`, on
/// the requested scale.
pub fn coefficient_draws(
    samples: &PosteriorSamples,
    problem: &Problem,
    scale: CoefficientScale,
) -> Vec<Vec<Vec<Vec<f64>>>> {
    let k = problem.design.num_columns();
    let layout = &problem.layout;
    let has_intercept = problem.design.has_intercept();
    let record = match scale {
        CoefficientScale::Raw => problem.standardization(),
        CoefficientScale::Standardized => None,
    };
    let slope_names: Vec<String> = layout
        .coefficient_names
        .iter()
        .skip(usize::from(has_intercept))
        .cloned()
        .collect();
    let mut out =
        vec![
            vec![vec![Vec::with_capacity(samples.draws_per_chain()); samples.num_chains()]; k];
            layout.num_predictors
        ];
    for chain in 0..samples.num_chains() {
        for draw in 0..samples.draws_per_chain() {
            let row = samples.row(chain, draw);
            for l in 0..layout.num_predictors {
                let coef = &row[l * k..(l + 1) * k];
                let values = match record {
                    Some(rec) => {
                        let (intercept, slopes) = if has_intercept {
                            (Some(coef[0]), &coef[1..])
                        } else {
                            (None, coef)
                        };
                        let (a, b) = rec.unstandardize(&slope_names, intercept, slopes);
                        a.into_iter().chain(b).collect()
                    }
                    None => coef.to_vec(),
                };
                for (c, v) in values.into_iter().enumerate() {
                    out[l][c][chain].push(v);
                }
            }
        }
    }
    out
}

pub(crate) fn fitted_labels(family: Family) -> Vec<&'static str> {
    match family {
        Family::Poisson | Family::NegativeBinomial | Family::Beta => vec!["mu"],
        Family::Binomial => vec!["R"],
        Family::Multinomial => vec!["P[employed]", "P[unemployed]", "P[inactive]"],
        Family::Gaussian { .. } => vec!["mean"],
    }
}

/// Mean parameter(s) of every cell at `state`: `out[cell][category]`.
pub fn cell_means(problem: &Problem, state: &ParameterState) -> Vec<Vec<f64>> {
    let eta = problem.linear_predictors(state);
    (0..problem.num_cells())
        .map(|i| {
            let e: Vec<f64> = eta.iter().map(|e| e[i]).collect();
            match mean_from_eta(problem.family(), &e, state.dispersion) {
                Some(MeanParameter::Scalar(m)) => vec![m],
                Some(MeanParameter::Probabilities(p)) => p.to_vec(),
                None => vec![f64::NAN; fitted_labels(problem.family()).len()],
            }
        })
        .collect()
}

/// Summaries of cell-level mean parameters from per-draw values
/// `draws[draw][cell][category]`; `cells[i]` is the (region, quarter) of
/// cell slot `i`.
pub fn summarize_cells(
    family: Family,
    cells: &[(usize, usize)],
    draws: &[Vec<Vec<f64>>],
) -> Vec<CellSummary> {
    let labels = fitted_labels(family);
    let mut out = Vec::new();
    for (i, &(region, quarter)) in cells.iter().enumerate() {
        for (q, label) in labels.iter().enumerate() {
            let mut xs: Vec<f64> = draws.iter().map(|d| d[i][q]).collect();
            let mean = stats::mean(&xs);
            let sd = stats::std_dev(&xs);
            xs.sort_by(f64::total_cmp);
            out.push(CellSummary {
                region,
                quarter,
                label: label.to_string(),
                mean,
                sd,
                q025: stats::quantile_sorted(&xs, 0.025),
                q975: stats::quantile_sorted(&xs, 0.975),
            });
        }
    }
    out
}

/// Pooled-chain summary with coefficients on the raw covariate scale.
pub fn summarize(samples: &PosteriorSamples, problem: &Problem) -> FitSummary {
    summarize_on(samples, problem, CoefficientScale::Raw)
}

pub fn summarize_on(
    samples: &PosteriorSamples,
    problem: &Problem,
    scale: CoefficientScale,
) -> FitSummary {
    let layout = &problem.layout;
    let mut parameters = Vec::new();
    let coefs = coefficient_draws(samples, problem, scale);
    for (l, per_column) in coefs.iter().enumerate() {
        for (c, chains) in per_column.iter().enumerate() {
            parameters.push(summarize_draws(&layout.coefficient_label(l, c), chains));
        }
    }
    for (i, kind) in samples.parameter_kinds().iter().enumerate() {
        if matches!(kind, ParameterKind::Precision | ParameterKind::Dispersion) {
            parameters.push(summarize_draws(
                &samples.parameter_names()[i],
                &samples.chain_draws(i),
            ));
        }
    }
    let draws: Vec<Vec<Vec<f64>>> = samples
        .states(problem)
        .map(|s| cell_means(problem, &s))
        .collect();
    FitSummary {
        parameters,
        fitted: summarize_cells(problem.family(), problem.design.cells(), &draws),
    }
}

impl FitSummary {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// `parameter,mean,sd,q025,q975,psrf`.
    pub fn write_parameters_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "parameter,mean,sd,q025,q975,psrf")?;
        for p in &self.parameters {
            let psrf = p.psrf.map(|r| r.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                quote(&p.name),
                p.mean,
                p.sd,
                p.q025,
                p.q975,
                psrf
            )?;
        }
        Ok(())
    }

    /// `region,quarter,quantity,mean,sd,q025,q975` with 1-based ids.
    pub fn write_fitted_csv(&self, out: impl Write) -> Result<()> {
        write_cells_csv(&self.fitted, out)
    }
}

pub fn write_cells_csv(cells: &[CellSummary], mut out: impl Write) -> Result<()> {
    writeln!(out, "region,quarter,quantity,mean,sd,q025,q975")?;
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.region + 1,
            c.quarter + 1,
            quote(&c.label),
            c.mean,
            c.sd,
            c.q025,
            c.q975
        )?;
    }
    Ok(())
}

fn quote(s: &str) -> String {
    if s.contains(',') {
        format!("\"{s}\"")
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_draws() {
        let s = summarize_draws("c", &[vec![0.1; 50], vec![0.1; 50]]);
        assert_eq!((s.mean, s.sd, s.q025, s.q975), (0.1, 0.0, 0.1, 0.1));
    }

    #[test]
    fn type7_quantile_of_one_to_hundred() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize_draws("x", &[xs[..50].to_vec(), xs[50..].to_vec()]);
        assert!((s.q025 - 3.475).abs() < 1e-12);
        assert!(s.q025 <= s.q975);
    }
}
