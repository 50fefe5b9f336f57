//! Model declaration: likelihood family and link, the terms of the linear
//! predictor, offsets, priors, and the design matrices built from a panel.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::data::{CovariateGroup, PanelDataset};
use crate::error::{Error, Result};
use crate::stats::logistic;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Poisson,
    NegativeBinomial,
    Binomial,
    Beta,
    Multinomial,
    /// Identity-link Gaussian with known variance. Not a modelling family for
    /// panel data; it exists so the sampler can be checked against
    /// Normal–Normal conjugate results.
    Gaussian {
        variance: f64,
    },
}

impl Family {
    pub fn has_dispersion(self) -> bool {
        matches!(self, Family::NegativeBinomial | Family::Beta)
    }

    /// Number of linear predictors (two non-baseline categories for the
    /// multinomial, one otherwise).
    pub fn num_predictors(self) -> usize {
        match self {
            Family::Multinomial => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::NegativeBinomial => "negbin",
            Family::Binomial => "binomial",
            Family::Beta => "beta",
            Family::Multinomial => "multinomial",
            Family::Gaussian { .. } => "gaussian",
        }
    }

    pub fn link_name(self) -> &'static str {
        match self {
            Family::Poisson => "log",
            Family::NegativeBinomial => "log_mean_ratio",
            Family::Binomial | Family::Beta => "logit",
            Family::Multinomial => "baseline_logit",
            Family::Gaussian { .. } => "identity",
        }
    }

    fn default_offset(self) -> OffsetRule {
        match self {
            Family::Poisson | Family::NegativeBinomial => OffsetRule::LogSampleSize,
            _ => OffsetRule::None,
        }
    }

    fn default_effects(self) -> EffectStructure {
        match self {
            Family::Multinomial => EffectStructure::Unstructured,
            _ => EffectStructure::Structured,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "poisson" => Family::Poisson,
            "negbin" | "negative_binomial" | "negativebinomial" | "nb" => Family::NegativeBinomial,
            "binomial" => Family::Binomial,
            "beta" => Family::Beta,
            "multinomial" => Family::Multinomial,
            other => return Err(Error::config("family", format!("unknown family `{other}`"))),
        })
    }
}

/// Inverse link: maps a linear predictor to the family's mean parameter
/// (μ for Poisson / negative binomial, R for binomial, μ for beta).
pub fn link_apply(family: Family, eta: f64, dispersion: Option<f64>) -> Result<f64> {
    if family.has_dispersion() != dispersion.is_some() {
        return Err(Error::spec(format!(
            "{family}: dispersion must be supplied iff the family has one"
        )));
    }
    match family {
        Family::Poisson => Ok(eta.exp()),
        Family::NegativeBinomial => {
            if !(eta < 0.0) {
                return Err(Error::LinkDomain {
                    family: "negbin",
                    eta,
                });
            }
            let phi = dispersion.unwrap();
            // μ = φ e^η / (1 − e^η)
            Ok(phi * eta.exp() / -eta.exp_m1())
        }
        Family::Binomial | Family::Beta => Ok(logistic(eta)),
        Family::Gaussian { .. } => Ok(eta),
        Family::Multinomial => Err(Error::spec(
            "multinomial has two predictors; use multinomial_probabilities",
        )),
    }
}

/// Forward link `h(mean)`; inverse of [`link_apply`].
pub fn link_forward(family: Family, mean: f64, dispersion: Option<f64>) -> Result<f64> {
    match family {
        Family::Poisson => Ok(mean.ln()),
        Family::NegativeBinomial => {
            let phi = dispersion.ok_or_else(|| Error::spec("negbin link needs φ"))?;
            Ok((mean / (mean + phi)).ln())
        }
        Family::Binomial | Family::Beta => Ok((mean / (1.0 - mean)).ln()),
        Family::Gaussian { .. } => Ok(mean),
        Family::Multinomial => Err(Error::spec("multinomial link is vector valued")),
    }
}

/// Category probabilities (employed, unemployed, inactive) from the two
/// baseline-category logits `η_q = log(P_q / P_3)`.
pub fn multinomial_probabilities(eta: [f64; 2]) -> [f64; 3] {
    // log(1 + e^η1 + e^η2), shifted for stability
    let m = eta[0].max(eta[1]).max(0.0);
    let e0 = (-m).exp();
    let e1 = (eta[0] - m).exp();
    let e2 = (eta[1] - m).exp();
    let total = e0 + e1 + e2;
    [e1 / total, e2 / total, e0 / total]
}

/// `log(1 + e^a + e^b)`.
pub(crate) fn log1p_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m <= 0.0 {
        (a.exp() + b.exp()).ln_1p()
    } else {
        m + ((-m).exp() + (a - m).exp() + (b - m).exp()).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetRule {
    None,
    /// `log(n_jt)`, the survey sample size of the cell.
    LogSampleSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectStructure {
    /// `w1_j + w2_t + ε_jt` with ICAR `w1`, temporal `w2`, i.i.d. `ε`.
    Structured,
    /// `u_j + v_t`, both i.i.d. Gaussian.
    Unstructured,
    /// Fixed effects only.
    None,
}

/// Prior on the temporal structured effect `w2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemporalPrior {
    /// Intrinsic first-order random walk (sum-to-zero constrained).
    Rw1,
    /// Stationary AR(1) with fixed autocorrelation `|rho| < 1`.
    Ar1 { rho: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSpec {
    pub include_intercept: bool,
    pub regional_terms: Vec<String>,
    pub temporal_terms: Vec<String>,
    pub spatiotemporal_terms: Vec<String>,
    pub offset_rule: OffsetRule,
    pub effect_structure: EffectStructure,
    pub temporal_prior: TemporalPrior,
}

impl PredictorSpec {
    /// The full predictor: intercept, three regional, one temporal and three
    /// spatio-temporal covariates, with the family's default offset and effects.
    pub fn full(family: Family) -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        PredictorSpec {
            include_intercept: true,
            regional_terms: s(&["companies", "primary", "secondary"]),
            temporal_terms: s(&["gdp"]),
            spatiotemporal_terms: s(&["iefp", "sa6", "sa8"]),
            offset_rule: family.default_offset(),
            effect_structure: family.default_effects(),
            temporal_prior: TemporalPrior::Rw1,
        }
    }

    pub fn intercept_only(family: Family) -> Self {
        PredictorSpec {
            include_intercept: true,
            regional_terms: Vec::new(),
            temporal_terms: Vec::new(),
            spatiotemporal_terms: Vec::new(),
            offset_rule: family.default_offset(),
            effect_structure: EffectStructure::None,
            temporal_prior: TemporalPrior::Rw1,
        }
    }

    pub fn num_coefficients(&self) -> usize {
        usize::from(self.include_intercept)
            + self.regional_terms.len()
            + self.temporal_terms.len()
            + self.spatiotemporal_terms.len()
    }

    /// Slope term names in design-column order (intercept excluded).
    pub fn slope_names(&self) -> Vec<String> {
        self.regional_terms
            .iter()
            .chain(&self.temporal_terms)
            .chain(&self.spatiotemporal_terms)
            .cloned()
            .collect()
    }
}

/// Prior on one regression coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientPrior {
    Gaussian {
        mean: f64,
        variance: f64,
    },
    /// `exp(coefficient) ~ Gamma(shape, rate)`; the conjugate prior for a
    /// log-link rate.
    LogGamma {
        shape: f64,
        rate: f64,
    },
}

impl CoefficientPrior {
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            CoefficientPrior::Gaussian { mean, variance } => {
                -0.5 * (2.0 * std::f64::consts::PI * variance).ln()
                    - 0.5 * (x - mean).powi(2) / variance
            }
            CoefficientPrior::LogGamma { shape, rate } => {
                shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) + shape * x
                    - rate * x.exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    /// Prior variance of every slope coefficient.
    pub coefficient_variance: f64,
    pub intercept_prior: CoefficientPrior,
    /// Gamma(shape, rate) on each precision τ.
    pub precision_shape: f64,
    pub precision_rate: f64,
    /// Gamma(shape, rate) on the dispersion φ.
    pub dispersion_shape: f64,
    pub dispersion_rate: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            coefficient_variance: 1e6,
            intercept_prior: CoefficientPrior::Gaussian {
                mean: 0.0,
                variance: 1e6,
            },
            precision_shape: 1.0,
            precision_rate: 0.0005,
            dispersion_shape: 1.0,
            dispersion_rate: 0.01,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("coefficient_variance", self.coefficient_variance),
            ("precision_shape", self.precision_shape),
            ("precision_rate", self.precision_rate),
            ("dispersion_shape", self.dispersion_shape),
            ("dispersion_rate", self.dispersion_rate),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        match self.intercept_prior {
            CoefficientPrior::Gaussian { variance, .. } if !(variance > 0.0) => Err(Error::config(
                "intercept_prior",
                "variance must be positive",
            )),
            CoefficientPrior::LogGamma { shape, rate } if !(shape > 0.0 && rate > 0.0) => Err(
                Error::config("intercept_prior", "shape and rate must be positive"),
            ),
            _ => Ok(()),
        }
    }

    /// Log density of Gamma(shape, rate) at `x`.
    pub fn gamma_log_density(shape: f64, rate: f64, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) + (shape - 1.0) * x.ln()
            - rate * x
    }

    pub fn slope_prior(&self) -> CoefficientPrior {
        CoefficientPrior::Gaussian {
            mean: 0.0,
            variance: self.coefficient_variance,
        }
    }
}

/// Everything needed to declare a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub predictor: PredictorSpec,
    pub priors: PriorSpec,
    /// Standardise covariates before fitting (coefficients are reported
    /// back on the raw scale).
    pub standardize: bool,
}

impl ModelSpec {
    /// The full hierarchical model for `family` with default priors.
    pub fn full(family: Family) -> Self {
        ModelSpec {
            family,
            predictor: PredictorSpec::full(family),
            priors: PriorSpec::default(),
            standardize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        let p = &self.predictor;
        if self.family == Family::Multinomial && p.effect_structure == EffectStructure::Structured {
            return Err(Error::spec(
                "multinomial family requires unstructured (or no) random effects",
            ));
        }
        if p.offset_rule == OffsetRule::LogSampleSize
            && !matches!(self.family, Family::Poisson | Family::NegativeBinomial)
        {
            return Err(Error::spec(format!(
                "log_sample_size offset is only valid for log-link count families, not {}",
                self.family
            )));
        }
        if let TemporalPrior::Ar1 { rho } = p.temporal_prior {
            if !(rho.abs() < 1.0) {
                return Err(Error::config("ar1_rho", "must satisfy |rho| < 1"));
            }
        }
        if let Family::Gaussian { variance } = self.family {
            if !(variance > 0.0) {
                return Err(Error::config(
                    "family",
                    "gaussian variance must be positive",
                ));
            }
        }
        Ok(())
    }

    /// Parses the line-oriented `key = value` model file. Unset keys take the
    /// full-model defaults; `family_override` (e.g. from the command line)
    /// replaces the file's family before family-dependent defaults resolve.
    pub fn parse(text: &str, family_override: Option<Family>) -> Result<Self> {
        let mut kv: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| {
            kv.iter()
                .rev()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
        };
        let family = match family_override {
            Some(f) => f,
            None => get("family")
                .map(Family::from_str)
                .transpose()?
                .unwrap_or(Family::Poisson),
        };
        let mut spec = ModelSpec::full(family);
        for (key, value) in &kv {
            let bad = |msg: &str| Error::config(key.clone(), format!("{msg} (got `{value}`)"));
            let parse_f64 = || value.parse::<f64>().map_err(|_| bad("expected a number"));
            let parse_bool = || match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(bad("expected true/false")),
            };
            let list = || -> Vec<String> {
                value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty() && *s != "none")
                    .map(String::from)
                    .collect()
            };
            let p = &mut spec.predictor;
            match key.as_str() {
                "family" => {}
                "link" => {
                    if value != "auto" && value != family.link_name() {
                        return Err(bad(&format!(
                            "{family} supports only the `{}` link",
                            family.link_name()
                        )));
                    }
                }
                "intercept" => p.include_intercept = parse_bool()?,
                "regional_terms" => p.regional_terms = list(),
                "temporal_terms" => p.temporal_terms = list(),
                "spatiotemporal_terms" => p.spatiotemporal_terms = list(),
                "offset_rule" => {
                    p.offset_rule = match value.as_str() {
                        "auto" => family.default_offset(),
                        "none" => OffsetRule::None,
                        "log_sample_size" => OffsetRule::LogSampleSize,
                        _ => return Err(bad("expected auto, none or log_sample_size")),
                    }
                }
                "effect_structure" => {
                    p.effect_structure = match value.as_str() {
                        "auto" => family.default_effects(),
                        "structured" => EffectStructure::Structured,
                        "unstructured" => EffectStructure::Unstructured,
                        "none" => EffectStructure::None,
                        _ => return Err(bad("expected auto, structured, unstructured or none")),
                    }
                }
                "temporal_prior" => {
                    p.temporal_prior = match value.as_str() {
                        "rw1" => TemporalPrior::Rw1,
                        "ar1" => match p.temporal_prior {
                            TemporalPrior::Ar1 { rho } => TemporalPrior::Ar1 { rho },
                            TemporalPrior::Rw1 => TemporalPrior::Ar1 { rho: 0.9 },
                        },
                        _ => return Err(bad("expected rw1 or ar1")),
                    }
                }
                "ar1_rho" => {
                    let rho = parse_f64()?;
                    p.temporal_prior = TemporalPrior::Ar1 { rho };
                }
                "coefficient_variance" => spec.priors.coefficient_variance = parse_f64()?,
                "intercept_variance" => {
                    spec.priors.intercept_prior = CoefficientPrior::Gaussian {
                        mean: 0.0,
                        variance: parse_f64()?,
                    }
                }
                "precision_shape" => spec.priors.precision_shape = parse_f64()?,
                "precision_rate" => spec.priors.precision_rate = parse_f64()?,
                "dispersion_shape" => spec.priors.dispersion_shape = parse_f64()?,
                "dispersion_rate" => spec.priors.dispersion_rate = parse_f64()?,
                "standardize" => spec.standardize = parse_bool()?,
                other => return Err(Error::config(other, "unknown key")),
            }
        }
        // `temporal_prior = rw1` after `ar1_rho` resets; keep file order semantics simple
        if get("temporal_prior") == Some("rw1") {
            spec.predictor.temporal_prior = TemporalPrior::Rw1;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical text form; `parse(to_text())` reproduces the spec.
    pub fn to_text(&self) -> String {
        let p = &self.predictor;
        let mut out = String::new();
        let list = |xs: &[String]| {
            if xs.is_empty() {
                "none".to_string()
            } else {
                xs.join(", ")
            }
        };
        writeln!(out, "family = {}", self.family).unwrap();
        writeln!(out, "link = {}", self.family.link_name()).unwrap();
        writeln!(out, "intercept = {}", p.include_intercept).unwrap();
        writeln!(out, "regional_terms = {}", list(&p.regional_terms)).unwrap();
        writeln!(out, "temporal_terms = {}", list(&p.temporal_terms)).unwrap();
        writeln!(
            out,
            "spatiotemporal_terms = {}",
            list(&p.spatiotemporal_terms)
        )
        .unwrap();
        let offset = match p.offset_rule {
            OffsetRule::None => "none",
            OffsetRule::LogSampleSize => "log_sample_size",
        };
        writeln!(out, "offset_rule = {offset}").unwrap();
        let effects = match p.effect_structure {
            EffectStructure::Structured => "structured",
            EffectStructure::Unstructured => "unstructured",
            EffectStructure::None => "none",
        };
        writeln!(out, "effect_structure = {effects}").unwrap();
        match p.temporal_prior {
            TemporalPrior::Rw1 => writeln!(out, "temporal_prior = rw1").unwrap(),
            TemporalPrior::Ar1 { rho } => {
                writeln!(out, "temporal_prior = ar1").unwrap();
                writeln!(out, "ar1_rho = {rho}").unwrap();
            }
        }
        writeln!(
            out,
            "coefficient_variance = {}",
            self.priors.coefficient_variance
        )
        .unwrap();
        if let CoefficientPrior::Gaussian {
            mean: 0.0,
            variance,
        } = self.priors.intercept_prior
        {
            writeln!(out, "intercept_variance = {variance}").unwrap();
        }
        writeln!(out, "precision_shape = {}", self.priors.precision_shape).unwrap();
        writeln!(out, "precision_rate = {}", self.priors.precision_rate).unwrap();
        writeln!(out, "dispersion_shape = {}", self.priors.dispersion_shape).unwrap();
        writeln!(out, "dispersion_rate = {}", self.priors.dispersion_rate).unwrap();
        writeln!(out, "standardize = {}", self.standardize).unwrap();
        out
    }
}

/// Fixed-effects design, offsets and cell index maps for one panel.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    num_regions: usize,
    num_quarters: usize,
    /// Row-major `rows × k`.
    x: Vec<f64>,
    k: usize,
    column_names: Vec<String>,
    offsets: Vec<f64>,
    cells: Vec<(usize, usize)>,
    has_intercept: bool,
}

pub const INTERCEPT: &str = "(Intercept)";

impl DesignMatrices {
    /// Assembles a design from explicit parts (used for toy problems that do
    /// not come from a panel).
    pub fn from_parts(
        num_regions: usize,
        num_quarters: usize,
        x: Vec<f64>,
        column_names: Vec<String>,
        offsets: Vec<f64>,
        cells: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let k = column_names.len();
        if x.len() != cells.len() * k || offsets.len() != cells.len() {
            return Err(Error::spec(
                "design dimensions do not match the number of rows",
            ));
        }
        if cells
            .iter()
            .any(|&(j, t)| j >= num_regions || t >= num_quarters)
        {
            return Err(Error::spec(
                "design row maps outside the region × quarter grid",
            ));
        }
        let has_intercept = column_names.first().map(String::as_str) == Some(INTERCEPT);
        Ok(DesignMatrices {
            num_regions,
            num_quarters,
            x,
            k,
            column_names,
            offsets,
            cells,
            has_intercept,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn num_columns(&self) -> usize {
        self.k
    }

    pub fn num_regions(&self) -> usize {
        self.num_regions
    }

    pub fn num_quarters(&self) -> usize {
        self.num_quarters
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// `(region, quarter)` of row `i`.
    pub fn cell(&self, i: usize) -> (usize, usize) {
        self.cells[i]
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn value(&self, i: usize, c: usize) -> f64 {
        self.x[i * self.k + c]
    }
}

/// Builds `X` with columns `[intercept | regional | temporal | spatio-temporal]`
/// in the order the predictor lists them, one row per panel cell.
pub fn build_design(dataset: &PanelDataset, spec: &PredictorSpec) -> Result<DesignMatrices> {
    let mut columns: Vec<(String, CovariateGroup, usize)> = Vec::new();
    let groups = [
        (&spec.regional_terms, CovariateGroup::Regional),
        (&spec.temporal_terms, CovariateGroup::Temporal),
        (&spec.spatiotemporal_terms, CovariateGroup::SpatioTemporal),
    ];
    for (terms, group) in groups {
        for name in terms {
            let idx = dataset
                .covariate_names(group)
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| match dataset.find_covariate(name) {
                    Some((g, _)) => Error::spec(format!(
                        "covariate `{name}` is {g:?} in the dataset, not {group:?}"
                    )),
                    None => Error::spec(format!("unknown covariate `{name}`")),
                })?;
            columns.push((name.clone(), group, idx));
        }
    }
    let mut names = Vec::new();
    if spec.include_intercept {
        names.push(INTERCEPT.to_string());
    }
    names.extend(columns.iter().map(|(n, _, _)| n.clone()));
    let k = names.len();
    let rows = dataset.num_cells();
    let mut x = Vec::with_capacity(rows * k);
    let mut offsets = Vec::with_capacity(rows);
    let mut cells = Vec::with_capacity(rows);
    for obs in dataset.observations() {
        if spec.include_intercept {
            x.push(1.0);
        }
        for (_, group, idx) in &columns {
            x.push(dataset.covariate(*group, *idx, obs.region, obs.quarter));
        }
        offsets.push(match spec.offset_rule {
            OffsetRule::None => 0.0,
            OffsetRule::LogSampleSize => {
                let n = obs.sample_size();
                if n == 0 {
                    return Err(Error::Domain(format!(
                        "log_sample_size offset needs n > 0 (region {}, quarter {})",
                        obs.region + 1,
                        obs.quarter + 1
                    )));
                }
                (n as f64).ln()
            }
        });
        cells.push((obs.region, obs.quarter));
    }
    DesignMatrices::from_parts(
        dataset.num_regions(),
        dataset.num_quarters(),
        x,
        names,
        offsets,
        cells,
    )
}

/// Where a random-effect vector is indexed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectIndex {
    Region,
    Quarter,
    Cell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectPrior {
    Icar,
    Rw1,
    Ar1 { rho: f64 },
    Iid,
}

impl EffectPrior {
    /// Intrinsic priors are identified only up to a constant; their vectors
    /// are kept centred.
    pub fn is_centered(self) -> bool {
        matches!(self, EffectPrior::Icar | EffectPrior::Rw1)
    }
}

/// One random-effect vector of the linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectBlock {
    pub name: String,
    pub predictor: usize,
    pub index: EffectIndex,
    pub prior: EffectPrior,
    /// Index into the precision vector.
    pub precision: usize,
}

/// Parameter layout implied by a spec: coefficients per predictor, effect
/// blocks, precisions, dispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayout {
    pub family: Family,
    pub num_predictors: usize,
    pub predictor_names: Vec<String>,
    pub coefficient_names: Vec<String>,
    pub blocks: Vec<EffectBlock>,
    pub precision_names: Vec<String>,
    pub has_dispersion: bool,
}

impl ModelLayout {
    pub fn new(family: Family, predictor: &PredictorSpec, coefficient_names: Vec<String>) -> Self {
        let num_predictors = family.num_predictors();
        let predictor_names: Vec<String> = if family == Family::Multinomial {
            vec!["employed".into(), "unemployed".into()]
        } else {
            vec![String::new()]
        };
        let mut blocks = Vec::new();
        let mut precision_names = Vec::new();
        match predictor.effect_structure {
            EffectStructure::Structured => {
                precision_names.extend(["tau_w1", "tau_w2", "tau_eps"].map(String::from));
                let temporal = match predictor.temporal_prior {
                    TemporalPrior::Rw1 => EffectPrior::Rw1,
                    TemporalPrior::Ar1 { rho } => EffectPrior::Ar1 { rho },
                };
                for l in 0..num_predictors {
                    let suffix = block_suffix(&predictor_names[l]);
                    blocks.push(EffectBlock {
                        name: format!("w1{suffix}"),
                        predictor: l,
                        index: EffectIndex::Region,
                        prior: EffectPrior::Icar,
                        precision: 0,
                    });
                    blocks.push(EffectBlock {
                        name: format!("w2{suffix}"),
                        predictor: l,
                        index: EffectIndex::Quarter,
                        prior: temporal,
                        precision: 1,
                    });
                    blocks.push(EffectBlock {
                        name: format!("eps{suffix}"),
                        predictor: l,
                        index: EffectIndex::Cell,
                        prior: EffectPrior::Iid,
                        precision: 2,
                    });
                }
            }
            EffectStructure::Unstructured => {
                precision_names.extend(["tau_u", "tau_v"].map(String::from));
                for l in 0..num_predictors {
                    let suffix = block_suffix(&predictor_names[l]);
                    blocks.push(EffectBlock {
                        name: format!("u{suffix}"),
                        predictor: l,
                        index: EffectIndex::Region,
                        prior: EffectPrior::Iid,
                        precision: 0,
                    });
                    blocks.push(EffectBlock {
                        name: format!("v{suffix}"),
                        predictor: l,
                        index: EffectIndex::Quarter,
                        prior: EffectPrior::Iid,
                        precision: 1,
                    });
                }
            }
            EffectStructure::None => {}
        }
        ModelLayout {
            family,
            num_predictors,
            predictor_names,
            coefficient_names,
            blocks,
            precision_names,
            has_dispersion: family.has_dispersion(),
        }
    }

    pub fn block(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn effect_len(&self, block: &EffectBlock, design: &DesignMatrices) -> usize {
        match block.index {
            EffectIndex::Region => design.num_regions(),
            EffectIndex::Quarter => design.num_quarters(),
            EffectIndex::Cell => design.num_rows(),
        }
    }

    /// Position of design row `row` within an effect vector.
    pub fn effect_position(block: &EffectBlock, design: &DesignMatrices, row: usize) -> usize {
        let (j, t) = design.cell(row);
        match block.index {
            EffectIndex::Region => j,
            EffectIndex::Quarter => t,
            EffectIndex::Cell => row,
        }
    }

    /// Fully qualified coefficient label, e.g. `unemployed:iefp`.
    pub fn coefficient_label(&self, predictor: usize, c: usize) -> String {
        let name = &self.coefficient_names[c];
        match self.predictor_names[predictor].as_str() {
            "" => name.clone(),
            p => format!("{p}:{name}"),
        }
    }
}

fn block_suffix(predictor_name: &str) -> String {
    if predictor_name.is_empty() {
        String::new()
    } else {
        format!("[{predictor_name}]")
    }
}

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    /// One coefficient vector per linear predictor.
    pub coefficients: Vec<Vec<f64>>,
    /// One vector per [`EffectBlock`], in layout order.
    pub effects: Vec<Vec<f64>>,
    pub precisions: Vec<f64>,
    pub dispersion: Option<f64>,
}

impl ParameterState {
    /// All-zero coefficients and effects, unit precisions (and dispersion).
    pub fn zeros(layout: &ModelLayout, design: &DesignMatrices) -> Self {
        ParameterState {
            coefficients: vec![vec![0.0; design.num_columns()]; layout.num_predictors],
            effects: layout
                .blocks
                .iter()
                .map(|b| vec![0.0; layout.effect_len(b, design)])
                .collect(),
            precisions: vec![1.0; layout.precision_names.len()],
            dispersion: layout.has_dispersion.then_some(1.0),
        }
    }

    pub fn effect<'a>(&'a self, layout: &ModelLayout, name: &str) -> Option<&'a [f64]> {
        layout.block(name).map(|b| self.effects[b].as_slice())
    }
}

/// `η = offset + x·coef + effects` for predictor `predictor` at design row `row`.
pub fn linear_predictor(
    state: &ParameterState,
    layout: &ModelLayout,
    design: &DesignMatrices,
    predictor: usize,
    row: usize,
) -> f64 {
    let mut eta = design.offset(row)
        + design
            .row(row)
            .iter()
            .zip(&state.coefficients[predictor])
            .map(|(x, b)| x * b)
            .sum::<f64>();
    for (b, block) in layout.blocks.iter().enumerate() {
        if block.predictor == predictor {
            eta += state.effects[b][ModelLayout::effect_position(block, design, row)];
        }
    }
    eta
}
