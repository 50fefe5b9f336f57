//! Synthetic panels drawn from the hierarchical models, with recorded truth.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::data::{PanelDataset, PanelObservation, PanelSchema, RegionGraph};
use crate::error::{Error, Result};
use crate::likelihood::{
    mean_from_eta, sample_observation, MeanParameter, ObservationSize, ObservationTarget,
};
use crate::model::{
    EffectIndex, EffectPrior, EffectStructure, Family, ModelLayout, OffsetRule, PredictorSpec,
    TemporalPrior, INTERCEPT,
};

/// Where the region adjacency comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    /// The built-in 28-region mainland Portugal contiguity.
    Portugal,
    /// A supplied graph.
    Given(RegionGraph),
    /// Random points in the unit square joined to their `k` nearest
    /// neighbours (symmetrised, then bridged until connected).
    RandomKnn { k: usize },
}

/// Distribution of the cell-level effect `ε_jt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonDistribution {
    /// `N(0, 1/τ_ε)`.
    Gaussian,
    /// `scale · t_df`, ignoring `τ_ε`.
    StudentT { df: f64, scale: f64 },
}

/// Regional covariate drawn i.i.d. uniform on `[low, high]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionalCovariate {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

/// Temporal covariate `base + slope · t + N(0, noise_sd²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalCovariate {
    pub name: String,
    pub base: f64,
    pub slope: f64,
    pub noise_sd: f64,
}

/// Spatio-temporal covariate
/// `base + spatial_sd · s_j + trend · t + N(0, noise_sd²)` where `s_j` is
/// white noise averaged over each region and its neighbours, rescaled to
/// unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalCovariate {
    pub name: String,
    pub base: f64,
    pub spatial_sd: f64,
    pub trend: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSettings {
    pub regional: Vec<RegionalCovariate>,
    pub temporal: Vec<TemporalCovariate>,
    pub spatiotemporal: Vec<SpatioTemporalCovariate>,
}

impl Default for CovariateSettings {
    fn default() -> Self {
        let r = |name: &str, low, high| RegionalCovariate {
            name: name.into(),
            low,
            high,
        };
        let st = |name: &str, base, spatial_sd, trend, noise_sd| SpatioTemporalCovariate {
            name: name.into(),
            base,
            spatial_sd,
            trend,
            noise_sd,
        };
        CovariateSettings {
            regional: vec![
                r("companies", 5.0, 15.0),
                r("primary", 0.02, 0.25),
                r("secondary", 0.15, 0.40),
            ],
            temporal: vec![TemporalCovariate {
                name: "gdp".into(),
                base: 4000.0,
                slope: 40.0,
                noise_sd: 20.0,
            }],
            spatiotemporal: vec![
                st("iefp", 0.05, 0.012, 0.001, 0.003),
                st("sa6", 0.07, 0.015, 0.0, 0.005),
                st("sa8", 0.30, 0.04, -0.002, 0.01),
            ],
        }
    }
}

impl CovariateSettings {
    fn schema_order_names(&self) -> Vec<String> {
        self.regional
            .iter()
            .map(|c| c.name.clone())
            .chain(self.temporal.iter().map(|c| c.name.clone()))
            .chain(self.spatiotemporal.iter().map(|c| c.name.clone()))
            .collect()
    }

    pub fn schema(&self) -> PanelSchema {
        PanelSchema {
            regional: self.regional.iter().map(|c| c.name.clone()).collect(),
            temporal: self.temporal.iter().map(|c| c.name.clone()).collect(),
            spatiotemporal: self.spatiotemporal.iter().map(|c| c.name.clone()).collect(),
            weight_column: "weight".into(),
        }
    }
}

/// Per-cell survey sizes: `n_j` log-uniform on `[min, max]`, then
/// `n_jt = round(n_j · U(1 − jitter, 1 + jitter))`; active `m ~ Bin(n, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSizeSettings {
    pub min: f64,
    pub max: f64,
    pub jitter: f64,
    pub active_probability: f64,
}

impl Default for SampleSizeSettings {
    fn default() -> Self {
        SampleSizeSettings {
            min: 200.0,
            max: 3000.0,
            jitter: 0.1,
            active_probability: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_regions: usize,
    pub num_quarters: usize,
    pub graph: GraphSource,
    pub family: Family,
    /// Raw-scale coefficients per linear predictor: intercept, then the
    /// regional, temporal and spatio-temporal covariates in settings order.
    pub coefficients: Vec<Vec<f64>>,
    /// One value per precision of the family's default effect structure
    /// (`τ_w1, τ_w2, τ_ε` or `τ_u, τ_v`); `+∞` switches an effect off.
    pub precisions: Vec<f64>,
    pub dispersion: Option<f64>,
    pub temporal_prior: TemporalPrior,
    pub epsilon: EpsilonDistribution,
    pub covariates: CovariateSettings,
    pub sample_size: SampleSizeSettings,
    pub seed: u64,
}

/// Default raw-scale slopes for companies, primary, secondary, gdp, iefp,
/// sa6, sa8.
pub const DEFAULT_SLOPES: [f64; 7] = [-0.03, 0.7, -0.2, 0.0001, 10.0, 1.0, -2.4];

impl ScenarioConfig {
    /// 28 × 12 panel on the Portugal graph with the family's default model.
    pub fn default_for(family: Family) -> Self {
        let with = |intercept: f64| {
            let mut c = vec![intercept];
            c.extend(DEFAULT_SLOPES);
            c
        };
        let (coefficients, precisions, dispersion) = match family {
            Family::Poisson => (vec![with(-2.8)], vec![10.0, 100.0, 400.0], None),
            Family::NegativeBinomial => (vec![with(-9.8)], vec![10.0, 100.0, 400.0], Some(1000.0)),
            Family::Binomial => (vec![with(-2.3)], vec![10.0, 100.0, 400.0], None),
            Family::Beta => (vec![with(-2.3)], vec![10.0, 100.0, 400.0], Some(200.0)),
            Family::Multinomial => {
                let mut employed = vec![0.0; 8];
                employed[0] = 0.3;
                (vec![employed, with(-2.0)], vec![30.0, 2000.0], None)
            }
            Family::Gaussian { .. } => (vec![with(0.0)], vec![10.0, 100.0, 400.0], None),
        };
        ScenarioConfig {
            num_regions: 28,
            num_quarters: 12,
            graph: GraphSource::Portugal,
            family,
            coefficients,
            precisions,
            dispersion,
            temporal_prior: TemporalPrior::Rw1,
            epsilon: EpsilonDistribution::Gaussian,
            covariates: CovariateSettings::default(),
            sample_size: SampleSizeSettings::default(),
            seed: 1,
        }
    }

    /// The full predictor the scenario generates from.
    pub fn predictor(&self) -> PredictorSpec {
        PredictorSpec {
            include_intercept: true,
            regional_terms: self
                .covariates
                .regional
                .iter()
                .map(|c| c.name.clone())
                .collect(),
            temporal_terms: self
                .covariates
                .temporal
                .iter()
                .map(|c| c.name.clone())
                .collect(),
            spatiotemporal_terms: self
                .covariates
                .spatiotemporal
                .iter()
                .map(|c| c.name.clone())
                .collect(),
            ..PredictorSpec::full(self.family)
        }
    }

    pub fn layout(&self) -> ModelLayout {
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(self.covariates.schema_order_names());
        let mut predictor = self.predictor();
        if predictor.effect_structure == EffectStructure::None {
            predictor.effect_structure = EffectStructure::Structured;
        }
        predictor.temporal_prior = self.temporal_prior;
        ModelLayout::new(self.family, &predictor, names)
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.family, Family::Gaussian { .. }) {
            return Err(Error::config(
                "family",
                "the gaussian family cannot be simulated as a panel",
            ));
        }
        if self.num_regions < 2 {
            return Err(Error::config("regions", "need at least two regions"));
        }
        if self.num_quarters < 2 {
            return Err(Error::config("quarters", "need at least two quarters"));
        }
        let layout = self.layout();
        let k = 1 + self.covariates.schema_order_names().len();
        if self.coefficients.len() != layout.num_predictors
            || self.coefficients.iter().any(|c| c.len() != k)
        {
            return Err(Error::config(
                "coefficients",
                format!(
                    "need {} vector(s) of {k} coefficients",
                    layout.num_predictors
                ),
            ));
        }
        if self.coefficients.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::config("coefficients", "must be finite"));
        }
        if self.precisions.len() != layout.precision_names.len() {
            return Err(Error::config(
                "precisions",
                format!(
                    "need {} values ({})",
                    layout.precision_names.len(),
                    layout.precision_names.join(", ")
                ),
            ));
        }
        if self.precisions.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::config("precisions", "must be positive"));
        }
        match (self.family.has_dispersion(), self.dispersion) {
            (true, Some(phi)) if phi.is_finite() && phi > 0.0 => {}
            (true, Some(phi)) => {
                return Err(Error::config("phi", format!("must be positive, got {phi}")))
            }
            (true, None) => return Err(Error::config("phi", "the family needs a dispersion")),
            (false, Some(_)) => return Err(Error::config("phi", "the family has no dispersion")),
            (false, None) => {}
        }
        let s = &self.sample_size;
        if !(s.min >= 1.0 && s.max >= s.min && s.max.is_finite()) {
            return Err(Error::config("sample_size", "need 1 ≤ min ≤ max"));
        }
        if !(0.0..1.0).contains(&s.jitter) {
            return Err(Error::config("sample_size", "jitter must be in [0, 1)"));
        }
        if !(s.active_probability > 0.0 && s.active_probability <= 1.0) {
            return Err(Error::config(
                "sample_size",
                "active probability must be in (0, 1]",
            ));
        }
        if let TemporalPrior::Ar1 { rho } = self.temporal_prior {
            if !(rho.abs() < 1.0) {
                return Err(Error::config("rho", "|rho| must be below 1"));
            }
        }
        if let EpsilonDistribution::StudentT { df, scale } = self.epsilon {
            if !(df > 0.0 && scale >= 0.0 && scale.is_finite()) {
                return Err(Error::config(
                    "epsilon",
                    "t errors need df > 0 and scale ≥ 0",
                ));
            }
        }
        match &self.graph {
            GraphSource::Portugal if self.num_regions != 28 => {
                Err(Error::config("graph", "the built-in graph has 28 regions"))
            }
            GraphSource::Given(g) if g.num_regions() != self.num_regions => Err(Error::config(
                "graph",
                "graph size does not match the number of regions",
            )),
            GraphSource::RandomKnn { k } if *k == 0 => {
                Err(Error::config("graph", "k must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Everything used to generate a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub family: Family,
    pub seed: u64,
    /// Raw-scale coefficients with their fit labels (e.g. `unemployed:iefp`).
    pub coefficients: Vec<(String, f64)>,
    pub precisions: Vec<(String, f64)>,
    pub dispersion: Option<f64>,
    /// Realised effect vectors by block name (cell effects region-major).
    pub effects: Vec<(String, Vec<f64>)>,
    /// Linear predictor(s) per cell, `eta[cell][predictor]`.
    pub eta: Vec<Vec<f64>>,
    /// Mean parameter(s) per cell (μ, R, or category probabilities).
    pub means: Vec<Vec<f64>>,
    /// Unemployment rate per cell (`μ/m` for count families).
    pub rates: Vec<f64>,
}

impl TruthRecord {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn precision(&self, name: &str) -> Option<f64> {
        self.precisions
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn effect(&self, name: &str) -> Option<&[f64]> {
        self.effects
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub dataset: PanelDataset,
    pub graph: RegionGraph,
    pub truth: TruthRecord,
    /// Non-fatal adjustments made while simulating.
    pub warnings: Vec<String>,
}

const NEGBIN_RETRIES: usize = 20;

/// Draws a dataset from `config`. Deterministic in `(config, config.seed)`.
pub fn simulate(config: &ScenarioConfig) -> Result<Simulation> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let graph = match &config.graph {
        GraphSource::Portugal => RegionGraph::portugal_nuts3(),
        GraphSource::Given(g) => g.clone(),
        GraphSource::RandomKnn { k } => random_knn_graph(config.num_regions, *k, &mut rng)?,
    };
    let (j_n, t_n) = (config.num_regions, config.num_quarters);
    let cells = j_n * t_n;
    let mut warnings = Vec::new();

    let sizes = draw_sample_sizes(config, &mut rng);
    let layout = config.layout();
    let predictor = config.predictor();
    let mut attempt = 0;
    let (covariates, effects, eta) = loop {
        let covariates = draw_covariates(config, &graph, &mut rng);
        let effects = draw_effects(config, &layout, &graph, &mut rng)?;
        let eta = linear_predictors(config, &layout, &predictor, &covariates, &effects, &sizes);
        let bad = config.family == Family::NegativeBinomial && eta.iter().any(|e| !(e[0] < 0.0));
        if !bad {
            break (covariates, effects, eta);
        }
        attempt += 1;
        warnings.push(format!(
            "negative binomial predictor left η < 0 on attempt {attempt}; covariates and effects redrawn"
        ));
        if attempt >= NEGBIN_RETRIES {
            return Err(Error::config(
                "coefficients",
                format!("negative binomial predictor reached η ≥ 0 in {NEGBIN_RETRIES} attempts; lower the intercept"),
            ));
        }
    };

    let mut observations = Vec::with_capacity(cells);
    let mut means = Vec::with_capacity(cells);
    let mut rates = Vec::with_capacity(cells);
    let mut clamped = 0usize;
    for cell in 0..cells {
        let (j, t) = (cell / t_n, cell % t_n);
        let (n, m) = sizes[cell];
        let mean =
            mean_from_eta(config.family, &eta[cell], config.dispersion).ok_or_else(|| {
                Error::config("coefficients", "linear predictor outside the link domain")
            })?;
        let (unemployed, employed, inactive, rate, mean_values) = match (config.family, mean) {
            (Family::Multinomial, MeanParameter::Probabilities(p)) => {
                let y = match sample_observation(
                    config.family,
                    mean,
                    None,
                    ObservationSize::Total(n),
                    &mut rng,
                ) {
                    ObservationTarget::Multinomial(y) => y,
                    _ => unreachable!("multinomial draw"),
                };
                (y[1], y[0], y[2], p[1] / (p[0] + p[1]), p.to_vec())
            }
            (Family::Binomial, MeanParameter::Scalar(r)) => {
                let y = match sample_observation(
                    config.family,
                    mean,
                    None,
                    ObservationSize::Trials(m),
                    &mut rng,
                ) {
                    ObservationTarget::Binomial { y, .. } => y,
                    _ => unreachable!("binomial draw"),
                };
                (y, m - y, n - m, r, vec![r])
            }
            (Family::Beta, MeanParameter::Scalar(mu)) => {
                let r = match sample_observation(
                    config.family,
                    mean,
                    config.dispersion,
                    ObservationSize::None,
                    &mut rng,
                ) {
                    ObservationTarget::Rate(r) => r,
                    _ => unreachable!("beta draw"),
                };
                let y = ((r * m as f64).round() as u64).min(m);
                (y, m - y, n - m, mu, vec![mu])
            }
            (Family::Poisson | Family::NegativeBinomial, MeanParameter::Scalar(mu)) => {
                let y = match sample_observation(
                    config.family,
                    mean,
                    config.dispersion,
                    ObservationSize::None,
                    &mut rng,
                ) {
                    ObservationTarget::Count(y) => y,
                    _ => unreachable!("count draw"),
                };
                if y > m {
                    clamped += 1;
                }
                let y = y.min(m);
                let rate = if m > 0 { mu / m as f64 } else { f64::NAN };
                (y, m - y, n - m, rate, vec![mu])
            }
            _ => unreachable!("family validated"),
        };
        observations.push(PanelObservation {
            region: j,
            quarter: t,
            unemployed,
            employed,
            inactive,
            weight: 1.0,
        });
        means.push(mean_values);
        rates.push(rate);
    }
    if clamped > 0 {
        warnings.push(format!(
            "{clamped} count draw(s) exceeded the active sample and were capped at m"
        ));
    }

    let settings = &config.covariates;
    let dataset = PanelDataset::new(
        j_n,
        t_n,
        observations,
        settings.regional.iter().map(|c| c.name.clone()).collect(),
        covariates.regional,
        settings.temporal.iter().map(|c| c.name.clone()).collect(),
        covariates.temporal,
        settings
            .spatiotemporal
            .iter()
            .map(|c| c.name.clone())
            .collect(),
        covariates.spatiotemporal,
    )?;

    let mut coefficients = Vec::new();
    for (l, coef) in config.coefficients.iter().enumerate() {
        for (c, v) in coef.iter().enumerate() {
            coefficients.push((layout.coefficient_label(l, c), *v));
        }
    }
    let truth = TruthRecord {
        family: config.family,
        seed: config.seed,
        coefficients,
        precisions: layout
            .precision_names
            .iter()
            .cloned()
            .zip(config.precisions.iter().copied())
            .collect(),
        dispersion: config.dispersion,
        effects: layout
            .blocks
            .iter()
            .map(|b| b.name.clone())
            .zip(effects)
            .collect(),
        eta,
        means,
        rates,
    };
    Ok(Simulation {
        dataset,
        graph,
        truth,
        warnings,
    })
}

struct Covariates {
    regional: Vec<f64>,
    temporal: Vec<f64>,
    spatiotemporal: Vec<f64>,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `(n, m)` per cell, region-major.
fn draw_sample_sizes<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Vec<(u64, u64)> {
    let s = &config.sample_size;
    let (lo, hi) = (s.min.ln(), s.max.ln());
    let mut out = Vec::with_capacity(config.num_regions * config.num_quarters);
    for _ in 0..config.num_regions {
        let base = (lo + (hi - lo) * rng.random::<f64>()).exp();
        for _ in 0..config.num_quarters {
            let factor = 1.0 - s.jitter + 2.0 * s.jitter * rng.random::<f64>();
            let n = (base * factor).round().max(1.0) as u64;
            let m = match sample_observation(
                Family::Binomial,
                MeanParameter::Scalar(s.active_probability),
                None,
                ObservationSize::Trials(n),
                rng,
            ) {
                ObservationTarget::Binomial { y, .. } => y,
                _ => unreachable!("binomial draw"),
            };
            out.push((n, m));
        }
    }
    out
}

/// Neighbourhood-averaged white noise, rescaled to unit variance.
fn smooth_field<R: Rng + ?Sized>(graph: &RegionGraph, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..graph.num_regions()).map(|_| normal(rng)).collect();
    let s: Vec<f64> = (0..graph.num_regions())
        .map(|j| {
            (z[j] + graph.neighbors(j).iter().map(|&k| z[k]).sum::<f64>())
                / (1 + graph.degree(j)) as f64
        })
        .collect();
    let sd = crate::stats::std_dev(&s);
    let mean = crate::stats::mean(&s);
    s.iter()
        .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
        .collect()
}

fn draw_covariates<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    graph: &RegionGraph,
    rng: &mut R,
) -> Covariates {
    let (j_n, t_n) = (config.num_regions, config.num_quarters);
    let settings = &config.covariates;
    let p1 = settings.regional.len();
    let mut regional = vec![0.0; j_n * p1];
    for j in 0..j_n {
        for (c, cov) in settings.regional.iter().enumerate() {
            regional[j * p1 + c] = cov.low + (cov.high - cov.low) * rng.random::<f64>();
        }
    }
    let p2 = settings.temporal.len();
    let mut temporal = vec![0.0; t_n * p2];
    for t in 0..t_n {
        for (c, cov) in settings.temporal.iter().enumerate() {
            temporal[t * p2 + c] = cov.base + cov.slope * t as f64 + cov.noise_sd * normal(rng);
        }
    }
    let p3 = settings.spatiotemporal.len();
    let mut spatiotemporal = vec![0.0; j_n * t_n * p3];
    for (c, cov) in settings.spatiotemporal.iter().enumerate() {
        let field = smooth_field(graph, rng);
        for j in 0..j_n {
            for t in 0..t_n {
                spatiotemporal[(j * t_n + t) * p3 + c] = cov.base
                    + cov.spatial_sd * field[j]
                    + cov.trend * t as f64
                    + cov.noise_sd * normal(rng);
            }
        }
    }
    Covariates {
        regional,
        temporal,
        spatiotemporal,
    }
}

/// Centred draw from the ICAR prior with precision `τ (D − A)`, using the
/// pseudo-inverse restricted to the sum-to-zero subspace.
pub fn draw_icar<R: Rng + ?Sized>(graph: &RegionGraph, tau: f64, rng: &mut R) -> Vec<f64> {
    let n = graph.num_regions();
    let z: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    if tau.is_infinite() {
        return vec![0.0; n];
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &graph.laplacian()));
    let tol = 1e-9 * eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut x = vec![0.0; n];
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= tol {
            continue;
        }
        let scale = z[k] / (tau * lambda).sqrt();
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += eig.eigenvectors[(i, k)] * scale;
        }
    }
    crate::latent::center_in_place(&mut x);
    x
}

/// Centred RW1 draw: cumulative `N(0, 1/τ)` increments.
pub fn draw_rw1<R: Rng + ?Sized>(len: usize, tau: f64, rng: &mut R) -> Vec<f64> {
    let sd = 1.0 / tau.sqrt();
    let mut x = Vec::with_capacity(len);
    let mut level = 0.0;
    for t in 0..len {
        let z = normal(rng);
        if t > 0 {
            level += sd * z;
        }
        x.push(level);
    }
    crate::latent::center_in_place(&mut x);
    x
}

fn draw_ar1<R: Rng + ?Sized>(len: usize, tau: f64, rho: f64, rng: &mut R) -> Vec<f64> {
    let sd = 1.0 / tau.sqrt();
    let mut x = Vec::with_capacity(len);
    let mut prev = 0.0;
    for t in 0..len {
        let z = normal(rng);
        prev = if t == 0 {
            sd * z / (1.0 - rho * rho).sqrt()
        } else {
            rho * prev + sd * z
        };
        x.push(prev);
    }
    x
}

fn draw_effects<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    layout: &ModelLayout,
    graph: &RegionGraph,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let (j_n, t_n) = (config.num_regions, config.num_quarters);
    let t_dist = match config.epsilon {
        EpsilonDistribution::StudentT { df, .. } => {
            Some(StudentT::new(df).map_err(|e| Error::config("epsilon", e.to_string()))?)
        }
        EpsilonDistribution::Gaussian => None,
    };
    let mut out = Vec::with_capacity(layout.blocks.len());
    for block in &layout.blocks {
        let tau = config.precisions[block.precision];
        let len = match block.index {
            EffectIndex::Region => j_n,
            EffectIndex::Quarter => t_n,
            EffectIndex::Cell => j_n * t_n,
        };
        let values = match (block.prior, block.index) {
            (EffectPrior::Icar, _) => draw_icar(graph, tau, rng),
            (EffectPrior::Rw1, _) => draw_rw1(len, tau, rng),
            (EffectPrior::Ar1 { rho }, _) => draw_ar1(len, tau, rho, rng),
            (EffectPrior::Iid, EffectIndex::Cell) => match (config.epsilon, &t_dist) {
                (EpsilonDistribution::StudentT { scale, .. }, Some(t)) => {
                    (0..len).map(|_| scale * t.sample(rng)).collect()
                }
                _ => (0..len).map(|_| normal(rng) / tau.sqrt()).collect(),
            },
            (EffectPrior::Iid, _) => (0..len).map(|_| normal(rng) / tau.sqrt()).collect(),
        };
        out.push(values);
    }
    Ok(out)
}

/// `eta[cell][predictor]`.
fn linear_predictors(
    config: &ScenarioConfig,
    layout: &ModelLayout,
    predictor: &PredictorSpec,
    cov: &Covariates,
    effects: &[Vec<f64>],
    sizes: &[(u64, u64)],
) -> Vec<Vec<f64>> {
    let (j_n, t_n) = (config.num_regions, config.num_quarters);
    let s = &config.covariates;
    let (p1, p2, p3) = (s.regional.len(), s.temporal.len(), s.spatiotemporal.len());
    (0..j_n * t_n)
        .map(|cell| {
            let (j, t) = (cell / t_n, cell % t_n);
            let mut x = Vec::with_capacity(1 + p1 + p2 + p3);
            x.push(1.0);
            x.extend_from_slice(&cov.regional[j * p1..(j + 1) * p1]);
            x.extend_from_slice(&cov.temporal[t * p2..(t + 1) * p2]);
            x.extend_from_slice(&cov.spatiotemporal[cell * p3..(cell + 1) * p3]);
            let offset = match predictor.offset_rule {
                OffsetRule::None => 0.0,
                OffsetRule::LogSampleSize => (sizes[cell].0 as f64).ln(),
            };
            (0..layout.num_predictors)
                .map(|l| {
                    let mut eta = offset
                        + x.iter()
                            .zip(&config.coefficients[l])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    for (b, block) in layout.blocks.iter().enumerate() {
                        if block.predictor != l {
                            continue;
                        }
                        eta += match block.index {
                            EffectIndex::Region => effects[b][j],
                            EffectIndex::Quarter => effects[b][t],
                            EffectIndex::Cell => effects[b][cell],
                        };
                    }
                    eta
                })
                .collect()
        })
        .collect()
}

/// Random connected graph: uniform points in the unit square, each joined
/// to its `k` nearest neighbours, components bridged by their closest pair.
pub fn random_knn_graph<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<RegionGraph> {
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let dist = |a: usize, b: usize| (pts[a].0 - pts[b].0).hypot(pts[a].1 - pts[b].1);
    let mut nb = vec![Vec::new(); n];
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&o| o != i).collect();
        others.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)));
        for &o in others.iter().take(k) {
            nb[i].push(o);
            nb[o].push(i);
        }
    }
    loop {
        let comp = components(&nb);
        let count = comp.iter().copied().max().map_or(0, |c| c + 1);
        if count <= 1 {
            break;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..n {
            for b in 0..n {
                if comp[a] == 0 && comp[b] != 0 && dist(a, b) < best.0 {
                    best = (dist(a, b), a, b);
                }
            }
        }
        nb[best.1].push(best.2);
        nb[best.2].push(best.1);
    }
    RegionGraph::from_neighbor_lists(nb)
}

fn components(nb: &[Vec<usize>]) -> Vec<usize> {
    let mut comp = vec![usize::MAX; nb.len()];
    let mut next = 0;
    for s in 0..nb.len() {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = next;
        while let Some(v) = stack.pop() {
            for &w in &nb[v] {
                if comp[w] == usize::MAX {
                    comp[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Long-format truth table `kind,name,region,quarter,value` (1-based ids,
/// empty when not applicable). Kinds: `meta`, `coefficient`, `precision`,
/// `dispersion`, `effect`, `eta`, `mean`, `rate`.
pub fn write_truth_csv(
    truth: &TruthRecord,
    num_quarters: usize,
    mut out: impl Write,
) -> Result<()> {
    writeln!(out, "kind,name,region,quarter,value")?;
    writeln!(out, "meta,family,,,{}", truth.family.name())?;
    writeln!(out, "meta,seed,,,{}", truth.seed)?;
    writeln!(out, "meta,quarters,,,{num_quarters}")?;
    for (n, v) in &truth.coefficients {
        writeln!(out, "coefficient,{},,,{v}", quote(n))?;
    }
    for (n, v) in &truth.precisions {
        writeln!(out, "precision,{n},,,{v}")?;
    }
    if let Some(phi) = truth.dispersion {
        writeln!(out, "dispersion,phi,,,{phi}")?;
    }
    for (name, values) in &truth.effects {
        for (i, v) in values.iter().enumerate() {
            let (region, quarter) = if name.starts_with("eps") {
                (
                    (i / num_quarters + 1).to_string(),
                    (i % num_quarters + 1).to_string(),
                )
            } else if name.starts_with("w2") || name.starts_with('v') {
                (String::new(), (i + 1).to_string())
            } else {
                ((i + 1).to_string(), String::new())
            };
            writeln!(out, "effect,{},{region},{quarter},{v}", quote(name))?;
        }
    }
    let labels = mean_labels(truth.family);
    for (cell, eta) in truth.eta.iter().enumerate() {
        let (j, t) = (cell / num_quarters + 1, cell % num_quarters + 1);
        for (l, e) in eta.iter().enumerate() {
            writeln!(out, "eta,{l},{j},{t},{e}")?;
        }
        for (label, m) in labels.iter().zip(&truth.means[cell]) {
            writeln!(out, "mean,{},{j},{t},{m}", quote(label))?;
        }
        writeln!(out, "rate,rate,{j},{t},{}", truth.rates[cell])?;
    }
    Ok(())
}

fn mean_labels(family: Family) -> Vec<&'static str> {
    match family {
        Family::Multinomial => vec!["P[employed]", "P[unemployed]", "P[inactive]"],
        Family::Binomial => vec!["R"],
        _ => vec!["mu"],
    }
}

fn quote(s: &str) -> String {
    if s.contains(',') {
        format!("\"{s}\"")
    } else {
        s.to_string()
    }
}

/// Reads a table written by [`write_truth_csv`].
pub fn read_truth_csv(reader: impl Read) -> Result<TruthRecord> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut family = None;
    let mut seed = 0;
    let mut quarters = 0usize;
    let mut truth = TruthRecord {
        family: Family::Poisson,
        seed: 0,
        coefficients: Vec::new(),
        precisions: Vec::new(),
        dispersion: None,
        effects: Vec::new(),
        eta: Vec::new(),
        means: Vec::new(),
        rates: Vec::new(),
    };
    let bad = |line: usize, msg: String| Error::Parse {
        path: "truth.csv".into(),
        line,
        message: msg,
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let value = || {
            field(4)
                .parse::<f64>()
                .map_err(|e| bad(line, format!("bad value: {e}")))
        };
        let index = |k: usize| -> Result<usize> {
            field(k)
                .parse::<usize>()
                .map(|v| v - 1)
                .map_err(|e| bad(line, format!("bad index: {e}")))
        };
        let cell = |tr: &TruthRecord| -> Result<usize> {
            let _ = tr;
            Ok(index(2)? * quarters + index(3)?)
        };
        match field(0) {
            "meta" => match field(1) {
                "family" => family = Some(field(4).parse::<Family>()?),
                "seed" => {
                    seed = field(4)
                        .parse()
                        .map_err(|e| bad(line, format!("bad seed: {e}")))?
                }
                "quarters" => {
                    quarters = field(4)
                        .parse()
                        .map_err(|e| bad(line, format!("bad quarters: {e}")))?
                }
                other => return Err(bad(line, format!("unknown meta key `{other}`"))),
            },
            "coefficient" => truth.coefficients.push((field(1).to_string(), value()?)),
            "precision" => truth.precisions.push((field(1).to_string(), value()?)),
            "dispersion" => truth.dispersion = Some(value()?),
            "effect" => {
                let name = field(1).to_string();
                let v = value()?;
                match truth.effects.last_mut() {
                    Some((n, values)) if *n == name => values.push(v),
                    _ => truth.effects.push((name, vec![v])),
                }
            }
            "eta" | "mean" | "rate" => {
                if quarters == 0 {
                    return Err(bad(line, "cell rows before the quarters header".into()));
                }
                let c = cell(&truth)?;
                let target = match field(0) {
                    "eta" => &mut truth.eta,
                    "mean" => &mut truth.means,
                    _ => {
                        if truth.rates.len() <= c {
                            truth.rates.resize(c + 1, f64::NAN);
                        }
                        truth.rates[c] = value()?;
                        continue;
                    }
                };
                if target.len() <= c {
                    target.resize(c + 1, Vec::new());
                }
                target[c].push(value()?);
            }
            other => return Err(bad(line, format!("unknown row kind `{other}`"))),
        }
    }
    truth.family = family.ok_or_else(|| bad(1, "missing family".into()))?;
    truth.seed = seed;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_dataset() {
        let c = ScenarioConfig::default_for(Family::Poisson);
        let a = simulate(&c).unwrap();
        let b = simulate(&c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn icar_draw_is_centred_with_expected_scale() {
        let g = RegionGraph::portugal_nuts3();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut q = 0.0;
        let reps = 400;
        for _ in 0..reps {
            let x = draw_icar(&g, 4.0, &mut rng);
            assert!(x.iter().sum::<f64>().abs() < 1e-10);
            q += crate::latent::icar_quadratic_form(&x, &g);
        }
        // E[τ xᵀQx] = J − 1
        let mean = 4.0 * q / reps as f64;
        assert!((mean - 27.0).abs() < 1.5, "{mean}");
    }

    #[test]
    fn multinomial_counts_add_up() {
        let s = simulate(&ScenarioConfig::default_for(Family::Multinomial)).unwrap();
        for (o, p) in s.dataset.observations().iter().zip(&s.truth.means) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(o.sample_size() > 0);
        }
    }

    #[test]
    fn negative_dispersion_is_a_config_error() {
        let mut c = ScenarioConfig::default_for(Family::NegativeBinomial);
        c.dispersion = Some(-1.0);
        assert!(matches!(simulate(&c), Err(Error::Config { .. })));
    }

    #[test]
    fn random_graph_is_connected() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_knn_graph(40, 2, &mut rng).unwrap();
        assert_eq!(g.num_regions(), 40);
    }

    #[test]
    fn truth_round_trips_through_csv() {
        let s = simulate(&ScenarioConfig::default_for(Family::Beta)).unwrap();
        let mut buf = Vec::new();
        write_truth_csv(&s.truth, 12, &mut buf).unwrap();
        let back = read_truth_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s.truth);
    }
}
