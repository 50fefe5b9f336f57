use crate::data::{standardize_covariates, PanelDataset, RegionGraph, StandardizationRecord};
use crate::error::{Error, Result};
use crate::latent;
use crate::likelihood::{CellKernel, DispersionCache, ObservationTarget};
use crate::model::{
    build_design, DesignMatrices, EffectPrior, Family, ModelLayout, ModelSpec, ParameterState,
    PriorSpec,
};

/// A model bound to data: design, per-cell targets and everything the
/// sampler and the diagnostics need to evaluate densities.
#[derive(Debug, Clone)]
pub struct Problem {
    pub(crate) spec: ModelSpec,
    pub(crate) layout: ModelLayout,
    pub(crate) design: DesignMatrices,
    pub(crate) targets: Vec<ObservationTarget>,
    pub(crate) kernels: Vec<CellKernel>,
    pub(crate) graph: Option<RegionGraph>,
    pub(crate) standardization: Option<StandardizationRecord>,
    pub(crate) boundary_adjusted: Vec<usize>,
    /// `block_rows[b][pos]`: design rows touched by entry `pos` of block `b`.
    pub(crate) block_rows: Vec<Vec<Vec<usize>>>,
}

/// Per-cell likelihood targets for `family`. Beta rates at 0 or 1 are moved
/// inside the unit interval by `r' = (r (m − 1) + 0.5) / m`; their cell
/// indices are returned alongside.
pub fn observation_targets(
    dataset: &PanelDataset,
    family: Family,
) -> Result<(Vec<ObservationTarget>, Vec<usize>)> {
    let mut adjusted = Vec::new();
    let targets = dataset
        .observations()
        .iter()
        .enumerate()
        .map(|(i, o)| {
            Ok(match family {
                Family::Poisson | Family::NegativeBinomial => {
                    ObservationTarget::Count(o.unemployed)
                }
                Family::Binomial => ObservationTarget::Binomial {
                    y: o.unemployed,
                    m: o.active(),
                },
                Family::Beta => {
                    let m = o.active();
                    if m == 0 {
                        ObservationTarget::Missing
                    } else {
                        let r = o.unemployed as f64 / m as f64;
                        if o.unemployed == 0 || o.unemployed == m {
                            adjusted.push(i);
                            ObservationTarget::Rate((r * (m as f64 - 1.0) + 0.5) / m as f64)
                        } else {
                            ObservationTarget::Rate(r)
                        }
                    }
                }
                Family::Multinomial => {
                    ObservationTarget::Multinomial([o.employed, o.unemployed, o.inactive])
                }
                Family::Gaussian { .. } => {
                    return Err(Error::spec("the gaussian family has no panel target"));
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((targets, adjusted))
}

impl Problem {
    /// Binds `spec` to a panel. Covariates are standardised first when the
    /// spec asks for it; `graph` is required for structured effects.
    pub fn new(
        dataset: &PanelDataset,
        graph: Option<&RegionGraph>,
        spec: &ModelSpec,
    ) -> Result<Self> {
        spec.validate()?;
        let data = if spec.standardize {
            standardize_covariates(dataset)
        } else {
            dataset.clone()
        };
        let design = build_design(&data, &spec.predictor)?;
        let (targets, adjusted) = observation_targets(dataset, spec.family)?;
        let mut problem = Problem::from_parts(spec.clone(), design, targets, graph.cloned())?;
        problem.standardization = data.standardization().cloned();
        problem.boundary_adjusted = adjusted;
        Ok(problem)
    }

    /// Binds a spec to an explicit design and targets (toy problems).
    pub fn from_parts(
        spec: ModelSpec,
        design: DesignMatrices,
        targets: Vec<ObservationTarget>,
        graph: Option<RegionGraph>,
    ) -> Result<Self> {
        spec.validate()?;
        if targets.len() != design.num_rows() {
            return Err(Error::spec("one target per design row is required"));
        }
        if design.has_intercept() && (0..design.num_rows()).any(|i| design.value(i, 0) != 1.0) {
            return Err(Error::spec("the intercept column must be all ones"));
        }
        let layout = ModelLayout::new(spec.family, &spec.predictor, design.column_names().to_vec());
        for block in &layout.blocks {
            match block.prior {
                EffectPrior::Icar => match &graph {
                    None => {
                        return Err(Error::spec(
                            "structured spatial effects need an adjacency graph",
                        ))
                    }
                    Some(g) if g.num_regions() != design.num_regions() => {
                        return Err(Error::spec(format!(
                            "adjacency has {} regions but the panel has {}",
                            g.num_regions(),
                            design.num_regions()
                        )))
                    }
                    _ => {}
                },
                EffectPrior::Rw1 if design.num_quarters() < 2 => {
                    return Err(Error::spec(
                        "a first-order random walk needs at least two quarters",
                    ))
                }
                _ => {}
            }
        }
        let kernels = targets
            .iter()
            .map(|t| CellKernel::new(spec.family, *t))
            .collect();
        let block_rows = layout
            .blocks
            .iter()
            .map(|block| {
                let mut rows = vec![Vec::new(); layout.effect_len(block, &design)];
                for i in 0..design.num_rows() {
                    rows[ModelLayout::effect_position(block, &design, i)].push(i);
                }
                rows
            })
            .collect();
        Ok(Problem {
            spec,
            layout,
            design,
            targets,
            kernels,
            graph,
            standardization: None,
            boundary_adjusted: Vec::new(),
            block_rows,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn design(&self) -> &DesignMatrices {
        &self.design
    }

    pub fn targets(&self) -> &[ObservationTarget] {
        &self.targets
    }

    pub fn graph(&self) -> Option<&RegionGraph> {
        self.graph.as_ref()
    }

    pub fn standardization(&self) -> Option<&StandardizationRecord> {
        self.standardization.as_ref()
    }

    /// Cells whose beta target was moved off the boundary.
    pub fn boundary_adjusted(&self) -> &[usize] {
        &self.boundary_adjusted
    }

    pub fn num_cells(&self) -> usize {
        self.design.num_rows()
    }

    /// Linear predictors of every row, `eta[predictor][row]`.
    pub fn linear_predictors(&self, state: &ParameterState) -> Vec<Vec<f64>> {
        let d = &self.design;
        let k = d.num_columns();
        (0..self.layout.num_predictors)
            .map(|l| {
                let coef = &state.coefficients[l];
                let mut eta: Vec<f64> = (0..d.num_rows())
                    .map(|i| d.offset(i) + (0..k).map(|c| d.value(i, c) * coef[c]).sum::<f64>())
                    .collect();
                for (b, block) in self.layout.blocks.iter().enumerate() {
                    if block.predictor != l {
                        continue;
                    }
                    for (pos, rows) in self.block_rows[b].iter().enumerate() {
                        let v = state.effects[b][pos];
                        for &i in rows {
                            eta[i] += v;
                        }
                    }
                }
                eta
            })
            .collect()
    }

    /// Per-cell log-likelihood at `state`.
    pub fn cell_log_likelihoods(&self, state: &ParameterState) -> Vec<f64> {
        let eta = self.linear_predictors(state);
        let disp = DispersionCache::new(state.dispersion);
        let family = self.family();
        (0..self.num_cells())
            .map(|i| {
                let e1 = if eta.len() > 1 { eta[1][i] } else { 0.0 };
                self.kernels[i].eval(family, eta[0][i], e1, &disp)
            })
            .collect()
    }

    pub fn log_likelihood(&self, state: &ParameterState) -> f64 {
        self.cell_log_likelihoods(state).iter().sum()
    }

    /// `−2 ×` log-likelihood; `+∞` outside the support.
    pub fn deviance(&self, state: &ParameterState) -> f64 {
        let ll = self.log_likelihood(state);
        if ll.is_nan() {
            f64::INFINITY
        } else {
            -2.0 * ll
        }
    }

    /// Log prior density of effect block `b` at `values` with precision `tau`.
    pub(crate) fn block_log_density(&self, b: usize, values: &[f64], tau: f64) -> f64 {
        match self.layout.blocks[b].prior {
            EffectPrior::Icar => {
                latent::icar_logdensity(values, tau, self.graph.as_ref().expect("validated"))
            }
            EffectPrior::Rw1 => latent::rw1_logdensity(values, tau).unwrap_or(f64::NEG_INFINITY),
            EffectPrior::Ar1 { rho } => latent::ar1_logdensity(values, tau, rho),
            EffectPrior::Iid => latent::iid_logdensity(values, tau),
        }
    }

    /// Sum of all prior and hyperprior terms, on the sampler's scale
    /// (log τ and log φ, with their Jacobians).
    pub fn log_prior(&self, state: &ParameterState) -> f64 {
        let priors = &self.spec.priors;
        let mut lp = 0.0;
        for coef in &state.coefficients {
            for (c, &v) in coef.iter().enumerate() {
                lp += if c == 0 && self.design.has_intercept() {
                    priors.intercept_prior.log_density(v)
                } else {
                    priors.slope_prior().log_density(v)
                };
            }
        }
        for (b, block) in self.layout.blocks.iter().enumerate() {
            lp += self.block_log_density(b, &state.effects[b], state.precisions[block.precision]);
        }
        for &tau in &state.precisions {
            lp += PriorSpec::gamma_log_density(priors.precision_shape, priors.precision_rate, tau)
                + tau.ln();
        }
        if let Some(phi) = state.dispersion {
            lp +=
                PriorSpec::gamma_log_density(priors.dispersion_shape, priors.dispersion_rate, phi)
                    + phi.ln();
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    /// Unnormalised log posterior (log-likelihood plus [`Problem::log_prior`]).
    pub fn log_posterior(&self, state: &ParameterState) -> f64 {
        let lp = self.log_prior(state) + self.log_likelihood(state);
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    pub(crate) fn effect_rank(&self, b: usize) -> f64 {
        let len = self.block_rows[b].len() as f64;
        match self.layout.blocks[b].prior {
            EffectPrior::Icar | EffectPrior::Rw1 => len - 1.0,
            EffectPrior::Ar1 { .. } | EffectPrior::Iid => len,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PanelObservation;
    use crate::model::{PredictorSpec, INTERCEPT};
    use approx::assert_abs_diff_eq;

    fn toy_dataset() -> PanelDataset {
        let obs = vec![
            PanelObservation {
                region: 0,
                quarter: 0,
                unemployed: 0,
                employed: 10,
                inactive: 4,
                weight: 1.0,
            },
            PanelObservation {
                region: 1,
                quarter: 0,
                unemployed: 3,
                employed: 7,
                inactive: 5,
                weight: 1.0,
            },
        ];
        PanelDataset::new(2, 1, obs, vec![], vec![], vec![], vec![], vec![], vec![]).unwrap()
    }

    #[test]
    fn beta_boundary_adjustment() {
        let (targets, adjusted) = observation_targets(&toy_dataset(), Family::Beta).unwrap();
        assert_eq!(adjusted, vec![0]);
        assert_eq!(targets[0], ObservationTarget::Rate(0.05));
        assert_eq!(targets[1], ObservationTarget::Rate(0.3));
    }

    #[test]
    fn empty_data_posterior_is_prior_only() {
        let spec = ModelSpec {
            predictor: PredictorSpec::intercept_only(Family::Poisson),
            ..ModelSpec::full(Family::Poisson)
        };
        let design =
            DesignMatrices::from_parts(1, 1, vec![], vec![INTERCEPT.into()], vec![], vec![])
                .unwrap();
        let p = Problem::from_parts(spec, design, vec![], None).unwrap();
        let state = ParameterState::zeros(&p.layout, &p.design);
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 1e6).ln();
        assert_abs_diff_eq!(p.log_posterior(&state), expected, epsilon = 1e-12);
    }

    #[test]
    fn adding_an_observation_adds_its_log_likelihood() {
        let spec = ModelSpec {
            predictor: PredictorSpec::intercept_only(Family::Binomial),
            ..ModelSpec::full(Family::Binomial)
        };
        let one = DesignMatrices::from_parts(
            1,
            1,
            vec![1.0],
            vec![INTERCEPT.into()],
            vec![0.0],
            vec![(0, 0)],
        )
        .unwrap();
        let two = DesignMatrices::from_parts(
            2,
            1,
            vec![1.0, 1.0],
            vec![INTERCEPT.into()],
            vec![0.0; 2],
            vec![(0, 0), (1, 0)],
        )
        .unwrap();
        let t1 = ObservationTarget::Binomial { y: 2, m: 9 };
        let t2 = ObservationTarget::Binomial { y: 5, m: 11 };
        let p1 = Problem::from_parts(spec.clone(), one, vec![t1], None).unwrap();
        let p2 = Problem::from_parts(spec, two, vec![t1, t2], None).unwrap();
        let mut s = ParameterState::zeros(&p1.layout, &p1.design);
        s.coefficients[0][0] = -0.7;
        let ll2 = crate::likelihood::log_likelihood_eta(Family::Binomial, &t2, &[-0.7], None);
        assert_abs_diff_eq!(
            p2.log_posterior(&s) - p1.log_posterior(&s),
            ll2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn structured_effects_need_a_graph() {
        let data = toy_dataset();
        let mut spec = ModelSpec::full(Family::Binomial);
        spec.predictor = PredictorSpec::intercept_only(Family::Binomial);
        spec.predictor.effect_structure = crate::model::EffectStructure::Structured;
        assert!(matches!(
            Problem::new(&data, None, &spec),
            Err(Error::Spec(_))
        ));
    }
}
