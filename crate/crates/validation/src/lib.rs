//! Reference computations written independently of the engine's density
//! code: closed-form densities in mean parameterisation, dense-grid
//! posterior quadrature, numerical integration and finite differences.

use statrs::distribution::{
    Beta, Binomial, Continuous, Discrete, Gamma, NegativeBinomial, Normal, Poisson,
};
use statrs::function::gamma::ln_gamma;

use saeb::inference::Problem;
use saeb::likelihood::ObservationTarget;
use saeb::model::{
    CoefficientPrior, DesignMatrices, EffectStructure, Family, ModelSpec, OffsetRule,
    PredictorSpec, PriorSpec, INTERCEPT,
};

/// Log density of one observation given its mean parameter(s), from
/// `statrs` distributions. Multinomial probabilities are
/// `(employed, unemployed, inactive)`.
pub fn reference_log_density(
    family: Family,
    target: &ObservationTarget,
    mean: &[f64],
    phi: Option<f64>,
) -> f64 {
    use ObservationTarget as T;
    match (family, *target) {
        (Family::Poisson, T::Count(y)) => {
            Poisson::new(mean[0]).map_or(f64::NEG_INFINITY, |d| d.ln_pmf(y))
        }
        (Family::NegativeBinomial, T::Count(y)) => {
            let phi = phi.expect("dispersion");
            NegativeBinomial::new(phi, phi / (mean[0] + phi))
                .map_or(f64::NEG_INFINITY, |d| d.ln_pmf(y))
        }
        (Family::Binomial, T::Binomial { y, m }) => {
            Binomial::new(mean[0], m).map_or(f64::NEG_INFINITY, |d| d.ln_pmf(y))
        }
        (Family::Beta, T::Rate(r)) => {
            let phi = phi.expect("dispersion");
            Beta::new(mean[0] * phi, (1.0 - mean[0]) * phi)
                .map_or(f64::NEG_INFINITY, |d| d.ln_pdf(r))
        }
        (Family::Multinomial, T::Multinomial(y)) => {
            let n: u64 = y.iter().sum();
            let mut ll = ln_gamma(n as f64 + 1.0);
            for (k, p) in y.iter().zip(mean) {
                ll += *k as f64 * p.ln() - ln_gamma(*k as f64 + 1.0);
            }
            ll
        }
        (Family::Gaussian { variance }, T::Real(y)) => {
            Normal::new(mean[0], variance.sqrt()).unwrap().ln_pdf(y)
        }
        _ => panic!("no reference density for {family:?} with {target:?}"),
    }
}

/// Mean parameter(s) implied by linear predictor(s) `eta`, or `None`
/// outside the link's domain.
pub fn reference_mean(family: Family, eta: &[f64], phi: Option<f64>) -> Option<Vec<f64>> {
    let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
    match family {
        Family::Poisson => Some(vec![eta[0].exp()]),
        Family::NegativeBinomial => {
            if eta[0] >= 0.0 {
                return None;
            }
            let q = eta[0].exp();
            Some(vec![phi? * q / (1.0 - q)])
        }
        Family::Binomial | Family::Beta => Some(vec![logistic(eta[0])]),
        Family::Multinomial => {
            let m = eta[0].max(eta[1]).max(0.0);
            let (a, b, c) = ((eta[0] - m).exp(), (eta[1] - m).exp(), (-m).exp());
            let s = a + b + c;
            Some(vec![a / s, b / s, c / s])
        }
        Family::Gaussian { .. } => Some(vec![eta[0]]),
    }
}

/// An intercept-only model with no random effects on a handful of
/// observations (zero offsets), with a Gaussian prior on every intercept
/// and a Gamma(shape, rate) prior on the dispersion.
#[derive(Debug, Clone)]
pub struct Toy {
    pub family: Family,
    pub targets: Vec<ObservationTarget>,
    pub intercept_mean: f64,
    pub intercept_variance: f64,
    pub dispersion_shape: f64,
    pub dispersion_rate: f64,
}

impl Toy {
    /// Free parameters: one intercept per linear predictor, then φ.
    pub fn dimension(&self) -> usize {
        self.family.num_predictors() + usize::from(self.family.has_dispersion())
    }

    /// Unnormalised log posterior at `theta` = (intercepts.., log φ),
    /// including the Jacobian of the log transform.
    pub fn log_posterior(&self, theta: &[f64]) -> f64 {
        let k = self.family.num_predictors();
        let prior = Normal::new(self.intercept_mean, self.intercept_variance.sqrt()).unwrap();
        let mut lp: f64 = theta[..k].iter().map(|b| prior.ln_pdf(*b)).sum();
        let phi = if self.family.has_dispersion() {
            let phi = theta[k].exp();
            lp += Gamma::new(self.dispersion_shape, self.dispersion_rate)
                .unwrap()
                .ln_pdf(phi)
                + theta[k];
            Some(phi)
        } else {
            None
        };
        let Some(mean) = reference_mean(self.family, &theta[..k], phi) else {
            return f64::NEG_INFINITY;
        };
        for t in &self.targets {
            lp += reference_log_density(self.family, t, &mean, phi);
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    /// The toy as an engine problem: one region, one quarter per
    /// observation, zero offsets.
    pub fn problem(&self) -> saeb::Result<Problem> {
        let n = self.targets.len();
        let spec = ModelSpec {
            family: self.family,
            predictor: PredictorSpec {
                offset_rule: OffsetRule::None,
                effect_structure: EffectStructure::None,
                ..PredictorSpec::intercept_only(self.family)
            },
            priors: PriorSpec {
                intercept_prior: CoefficientPrior::Gaussian {
                    mean: self.intercept_mean,
                    variance: self.intercept_variance,
                },
                dispersion_shape: self.dispersion_shape,
                dispersion_rate: self.dispersion_rate,
                ..PriorSpec::default()
            },
            standardize: false,
        };
        let cells = (0..n).map(|t| (0, t)).collect();
        let design = DesignMatrices::from_parts(
            1,
            n.max(1),
            vec![1.0; n],
            vec![INTERCEPT.into()],
            vec![0.0; n],
            cells,
        )?;
        Problem::from_parts(spec, design, self.targets.clone(), None)
    }

    /// The same toy with observation `i` removed.
    pub fn without(&self, i: usize) -> Toy {
        let mut t = self.clone();
        t.targets.remove(i);
        t
    }
}

/// Result of [`grid_posterior`].
#[derive(Debug, Clone)]
pub struct GridPosterior {
    /// Posterior means of each coordinate of `theta`.
    pub means: Vec<f64>,
    /// Posterior means of the transformed quantities.
    pub transformed: Vec<f64>,
    /// Log of the integral of `exp(log_density)` over the grid.
    pub log_evidence: f64,
}

/// Dense midpoint-rule quadrature of an unnormalised log density over a
/// box in one or two dimensions. A coarse pass over `initial` locates the
/// region within 40 log units of the maximum; the fine pass uses `n`
/// points per axis over that region.
pub fn grid_posterior(
    log_density: impl Fn(&[f64]) -> f64,
    initial: &[(f64, f64)],
    n: usize,
    transform: impl Fn(&[f64]) -> Vec<f64>,
) -> GridPosterior {
    let dim = initial.len();
    assert!(
        dim == 1 || dim == 2,
        "grid quadrature supports one or two dimensions"
    );
    let coarse = 400;
    let mut bounds = initial.to_vec();
    let mut best = f64::NEG_INFINITY;
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let points = |b: &[(f64, f64)], m: usize| -> (Vec<Vec<f64>>, Vec<f64>) {
        let axes: Vec<Vec<f64>> = b
            .iter()
            .map(|(lo, hi)| {
                (0..m)
                    .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / m as f64)
                    .collect()
            })
            .collect();
        let widths: Vec<f64> = b.iter().map(|(lo, hi)| (hi - lo) / m as f64).collect();
        let pts = if dim == 1 {
            axes[0].iter().map(|x| vec![*x]).collect()
        } else {
            axes[0]
                .iter()
                .flat_map(|x| axes[1].iter().map(move |y| vec![*x, *y]))
                .collect()
        };
        (pts, widths)
    };
    let (pts, widths) = points(&bounds, coarse);
    let values: Vec<f64> = pts.iter().map(|p| log_density(p)).collect();
    for v in &values {
        best = best.max(*v);
    }
    for (p, v) in pts.iter().zip(&values) {
        if *v > best - 40.0 {
            kept.push(p.clone());
        }
    }
    for d in 0..dim {
        let lo = kept.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min) - widths[d];
        let hi = kept.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max) + widths[d];
        bounds[d] = (lo.max(initial[d].0), hi.min(initial[d].1));
    }
    let (pts, widths) = points(&bounds, n);
    let cell: f64 = widths.iter().product();
    let values: Vec<f64> = pts.iter().map(|p| log_density(p)).collect();
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut means = vec![0.0; dim];
    let mut transformed: Vec<f64> = Vec::new();
    for (p, v) in pts.iter().zip(&values) {
        let w = (v - top).exp();
        if w == 0.0 {
            continue;
        }
        total += w;
        for d in 0..dim {
            means[d] += w * p[d];
        }
        let g = transform(p);
        if transformed.is_empty() {
            transformed = vec![0.0; g.len()];
        }
        for (acc, x) in transformed.iter_mut().zip(g) {
            *acc += w * x;
        }
    }
    GridPosterior {
        means: means.iter().map(|m| m / total).collect(),
        transformed: transformed.iter().map(|m| m / total).collect(),
        log_evidence: top + (total * cell).ln(),
    }
}

/// Composite Simpson rule with `intervals` (even) sub-intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    assert!(
        intervals.is_multiple_of(2),
        "Simpson's rule needs an even number of intervals"
    );
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for i in 1..intervals {
        let x = a + h * i as f64;
        s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

/// Central finite difference of `f` at `x` in coordinate `i` with step `h`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[i] += h;
    down[i] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

/// `|a − b| / max(|a|, |b|, 1)`: relative for large values, absolute near 0.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 4);
        assert!((v - 0.0).abs() < 1e-12);
    }

    #[test]
    fn grid_recovers_a_gaussian_mean() {
        let g = grid_posterior(
            |t| -0.5 * (t[0] - 1.5).powi(2) / 0.04,
            &[(-20.0, 20.0)],
            2000,
            |t| vec![t[0] * t[0]],
        );
        assert!((g.means[0] - 1.5).abs() < 1e-9);
        assert!((g.transformed[0] - (2.25 + 0.04)).abs() < 1e-6);
        let expected = 0.5 * (2.0 * std::f64::consts::PI * 0.04).ln();
        assert!((g.log_evidence - expected).abs() < 1e-6);
    }

    #[test]
    fn reference_links() {
        let p = reference_mean(Family::Multinomial, &[0.0, 0.0], None).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!(reference_mean(Family::NegativeBinomial, &[0.1], Some(2.0)).is_none());
        let mu = reference_mean(Family::NegativeBinomial, &[(0.5f64).ln()], Some(2.0)).unwrap()[0];
        assert!((mu - 2.0).abs() < 1e-12);
    }
}
