//! Log-likelihood kernels, η-gradients, predictive CDFs and random variates
//! for the five observation families (plus the Gaussian check family).

use rand::Rng;
use rand_distr::{
    Beta as BetaDist, Binomial as BinomialDist, Distribution, Gamma, Normal, Poisson as PoissonDist,
};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{digamma, gamma_ur, ln_gamma};

use crate::model::{log1p_exp2, multinomial_probabilities, Family};
use crate::stats::{log1p_exp, logistic};

/// What a single cell contributes to the likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationTarget {
    /// Unemployed count (Poisson, negative binomial).
    Count(u64),
    /// `y` unemployed out of `m` active (binomial).
    Binomial { y: u64, m: u64 },
    /// Unemployment rate in (0, 1) (beta).
    Rate(f64),
    /// (employed, unemployed, inactive) with total `n`.
    Multinomial([u64; 3]),
    /// Real-valued outcome (Gaussian check family).
    Real(f64),
    /// No information (e.g. beta target with an empty active sample).
    Missing,
}

/// Mean parameter of a family: μ, R, or the category probability vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanParameter {
    Scalar(f64),
    Probabilities([f64; 3]),
}

fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Exact log pmf / pdf of `target` given the mean parameter.
/// Targets outside the support give `-inf`.
pub fn log_likelihood(
    family: Family,
    target: &ObservationTarget,
    mean: MeanParameter,
    dispersion: Option<f64>,
) -> f64 {
    use ObservationTarget as T;
    let ninf = f64::NEG_INFINITY;
    match (family, *target, mean) {
        (_, T::Missing, _) => 0.0,
        (Family::Poisson, T::Count(y), MeanParameter::Scalar(mu)) => {
            if !(mu >= 0.0) {
                return ninf;
            }
            if mu == 0.0 {
                return if y == 0 { 0.0 } else { ninf };
            }
            y as f64 * mu.ln() - mu - ln_factorial(y)
        }
        (Family::NegativeBinomial, T::Count(y), MeanParameter::Scalar(mu)) => {
            let phi = match dispersion {
                Some(phi) if phi > 0.0 => phi,
                _ => return ninf,
            };
            if !(mu > 0.0) {
                return if mu == 0.0 && y == 0 { 0.0 } else { ninf };
            }
            let y_f = y as f64;
            ln_gamma(y_f + phi) - ln_gamma(phi) - ln_factorial(y) + y_f * mu.ln() + phi * phi.ln()
                - (y_f + phi) * (mu + phi).ln()
        }
        (Family::Binomial, T::Binomial { y, m }, MeanParameter::Scalar(r)) => {
            if y > m || !(0.0..=1.0).contains(&r) {
                return ninf;
            }
            let (y_f, m_f) = (y as f64, m as f64);
            let a = if y == 0 { 0.0 } else { y_f * r.ln() };
            let b = if y == m {
                0.0
            } else {
                (m_f - y_f) * (-r).ln_1p()
            };
            ln_choose(m, y) + a + b
        }
        (Family::Beta, T::Rate(r), MeanParameter::Scalar(mu)) => {
            let phi = match dispersion {
                Some(phi) if phi > 0.0 => phi,
                _ => return ninf,
            };
            if !(r > 0.0 && r < 1.0 && mu > 0.0 && mu < 1.0) {
                return ninf;
            }
            let (a, b) = (mu * phi, (1.0 - mu) * phi);
            ln_gamma(phi) - ln_gamma(a) - ln_gamma(b)
                + (a - 1.0) * r.ln()
                + (b - 1.0) * (-r).ln_1p()
        }
        (Family::Multinomial, T::Multinomial(y), MeanParameter::Probabilities(p)) => {
            let n: u64 = y.iter().sum();
            let mut ll = ln_factorial(n);
            for q in 0..3 {
                ll -= ln_factorial(y[q]);
                if y[q] > 0 {
                    if !(p[q] > 0.0) {
                        return ninf;
                    }
                    ll += y[q] as f64 * p[q].ln();
                }
            }
            ll
        }
        (Family::Gaussian { variance }, T::Real(y), MeanParameter::Scalar(mu)) => {
            -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - 0.5 * (y - mu).powi(2) / variance
        }
        _ => ninf,
    }
}

/// Mean parameter implied by linear predictor(s) `eta` (one entry, or two
/// for the multinomial). `None` when η is outside the link's domain.
pub fn mean_from_eta(
    family: Family,
    eta: &[f64],
    dispersion: Option<f64>,
) -> Option<MeanParameter> {
    match family {
        Family::Multinomial => Some(MeanParameter::Probabilities(multinomial_probabilities([
            eta[0], eta[1],
        ]))),
        Family::NegativeBinomial => {
            let e = eta[0];
            if !(e < 0.0) {
                return None;
            }
            Some(MeanParameter::Scalar(dispersion? * e.exp() / -e.exp_m1()))
        }
        Family::Poisson => Some(MeanParameter::Scalar(eta[0].exp())),
        Family::Binomial | Family::Beta => Some(MeanParameter::Scalar(logistic(eta[0]))),
        Family::Gaussian { .. } => Some(MeanParameter::Scalar(eta[0])),
    }
}

/// Log-likelihood as a function of the linear predictor(s).
pub fn log_likelihood_eta(
    family: Family,
    target: &ObservationTarget,
    eta: &[f64],
    dispersion: Option<f64>,
) -> f64 {
    if matches!(target, ObservationTarget::Missing) {
        return 0.0;
    }
    match mean_from_eta(family, eta, dispersion) {
        Some(mean) => log_likelihood(family, target, mean, dispersion),
        None => f64::NEG_INFINITY,
    }
}

/// Analytic gradient of [`log_likelihood_eta`] with respect to η
/// (second entry used only by the multinomial).
pub fn grad_log_likelihood_eta(
    family: Family,
    target: &ObservationTarget,
    eta: &[f64],
    dispersion: Option<f64>,
) -> [f64; 2] {
    use ObservationTarget as T;
    match (family, *target) {
        (_, T::Missing) => [0.0, 0.0],
        (Family::Poisson, T::Count(y)) => [y as f64 - eta[0].exp(), 0.0],
        (Family::NegativeBinomial, T::Count(y)) => {
            // d/dη [y η + φ log(1 − e^η)] = y − μ
            let phi = dispersion.unwrap_or(f64::NAN);
            let mu = phi * eta[0].exp() / -eta[0].exp_m1();
            [y as f64 - mu, 0.0]
        }
        (Family::Binomial, T::Binomial { y, m }) => [y as f64 - m as f64 * logistic(eta[0]), 0.0],
        (Family::Beta, T::Rate(r)) => {
            let phi = dispersion.unwrap_or(f64::NAN);
            let mu = logistic(eta[0]);
            let (a, b) = (mu * phi, (1.0 - mu) * phi);
            let dmu = phi * (r.ln() - (-r).ln_1p() - digamma(a) + digamma(b));
            [dmu * mu * (1.0 - mu), 0.0]
        }
        (Family::Multinomial, T::Multinomial(y)) => {
            let n = (y[0] + y[1] + y[2]) as f64;
            let p = multinomial_probabilities([eta[0], eta[1]]);
            [y[0] as f64 - n * p[0], y[1] as f64 - n * p[1]]
        }
        (Family::Gaussian { variance }, T::Real(y)) => [(y - eta[0]) / variance, 0.0],
        _ => [f64::NAN, f64::NAN],
    }
}

/// Per-cell kernel with the η-independent part of the log-likelihood
/// precomputed; this is what the sampler evaluates in its inner loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellKernel {
    target: ObservationTarget,
    constant: f64,
    /// Beta: (ln r, ln(1 − r)).
    logs: (f64, f64),
}

impl CellKernel {
    pub(crate) fn new(family: Family, target: ObservationTarget) -> Self {
        use ObservationTarget as T;
        let (constant, logs) = match (family, target) {
            (Family::Poisson | Family::NegativeBinomial, T::Count(y)) => {
                (-ln_factorial(y), (0.0, 0.0))
            }
            (Family::Binomial, T::Binomial { y, m }) if y <= m => (ln_choose(m, y), (0.0, 0.0)),
            (Family::Beta, T::Rate(r)) => (0.0, (r.ln(), (-r).ln_1p())),
            (Family::Multinomial, T::Multinomial(y)) => (
                ln_factorial(y.iter().sum()) - y.iter().map(|&v| ln_factorial(v)).sum::<f64>(),
                (0.0, 0.0),
            ),
            (Family::Gaussian { variance }, T::Real(_)) => (
                -0.5 * (2.0 * std::f64::consts::PI * variance).ln(),
                (0.0, 0.0),
            ),
            _ => (0.0, (0.0, 0.0)),
        };
        CellKernel {
            target,
            constant,
            logs,
        }
    }

    /// Full log-likelihood at `eta`. `disp` carries φ plus, for the negative
    /// binomial, `ln Γ(φ)` so the per-cell `ln Γ(y + φ)` is the only gamma call.
    #[inline]
    pub(crate) fn eval(&self, family: Family, eta0: f64, eta1: f64, disp: &DispersionCache) -> f64 {
        use ObservationTarget as T;
        match (family, self.target) {
            (_, T::Missing) => 0.0,
            (Family::Poisson, T::Count(y)) => self.constant + y as f64 * eta0 - eta0.exp(),
            (Family::NegativeBinomial, T::Count(y)) => {
                if !(eta0 < 0.0) {
                    return f64::NEG_INFINITY;
                }
                let y_f = y as f64;
                self.constant + ln_gamma(y_f + disp.phi) - disp.ln_gamma_phi
                    + y_f * eta0
                    + disp.phi * (-eta0.exp_m1()).ln()
            }
            (Family::Binomial, T::Binomial { y, m }) => {
                self.constant + y as f64 * eta0 - m as f64 * log1p_exp(eta0)
            }
            (Family::Beta, T::Rate(_)) => {
                let mu = logistic(eta0);
                if !(mu > 0.0 && mu < 1.0) {
                    return f64::NEG_INFINITY;
                }
                let a = mu * disp.phi;
                let b = disp.phi - a;
                disp.ln_gamma_phi - ln_gamma(a) - ln_gamma(b)
                    + (a - 1.0) * self.logs.0
                    + (b - 1.0) * self.logs.1
            }
            (Family::Multinomial, T::Multinomial(y)) => {
                let n = (y[0] + y[1] + y[2]) as f64;
                self.constant + y[0] as f64 * eta0 + y[1] as f64 * eta1 - n * log1p_exp2(eta0, eta1)
            }
            (Family::Gaussian { variance }, T::Real(y)) => {
                self.constant - 0.5 * (y - eta0).powi(2) / variance
            }
            _ => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DispersionCache {
    pub(crate) phi: f64,
    pub(crate) ln_gamma_phi: f64,
}

impl DispersionCache {
    pub(crate) fn new(phi: Option<f64>) -> Self {
        match phi {
            Some(phi) => DispersionCache {
                phi,
                ln_gamma_phi: ln_gamma(phi),
            },
            None => DispersionCache {
                phi: f64::NAN,
                ln_gamma_phi: f64::NAN,
            },
        }
    }
}

/// `P(Y < y)` and `P(Y = y)` (discrete families) or `(F(y), 0)` (continuous),
/// used for (mid-)PIT values. For the multinomial the unemployed count is
/// treated marginally as Binomial(n, P₂).
pub fn predictive_cdf(
    family: Family,
    target: &ObservationTarget,
    mean: MeanParameter,
    dispersion: Option<f64>,
) -> (f64, f64) {
    use ObservationTarget as T;
    match (family, *target, mean) {
        (Family::Poisson, T::Count(y), MeanParameter::Scalar(mu)) => {
            let below = if y == 0 { 0.0 } else { gamma_ur(y as f64, mu) };
            (
                below,
                log_likelihood(family, target, mean, dispersion).exp(),
            )
        }
        (Family::NegativeBinomial, T::Count(y), MeanParameter::Scalar(mu)) => {
            let phi = dispersion.unwrap_or(f64::NAN);
            let p = phi / (mu + phi);
            let below = if y == 0 {
                0.0
            } else {
                beta_reg(phi, y as f64, p)
            };
            (
                below,
                log_likelihood(family, target, mean, dispersion).exp(),
            )
        }
        (Family::Binomial, T::Binomial { y, m }, MeanParameter::Scalar(r)) => {
            binomial_cdf_parts(y, m, r)
        }
        (Family::Multinomial, T::Multinomial(y), MeanParameter::Probabilities(p)) => {
            binomial_cdf_parts(y[1], y.iter().sum(), p[1])
        }
        (Family::Beta, T::Rate(r), MeanParameter::Scalar(mu)) => {
            let phi = dispersion.unwrap_or(f64::NAN);
            (beta_reg(mu * phi, (1.0 - mu) * phi, r), 0.0)
        }
        (Family::Gaussian { variance }, T::Real(y), MeanParameter::Scalar(mu)) => {
            let z = (y - mu) / variance.sqrt();
            (
                0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2),
                0.0,
            )
        }
        _ => (f64::NAN, f64::NAN),
    }
}

fn binomial_cdf_parts(y: u64, m: u64, r: f64) -> (f64, f64) {
    // P(Y ≤ k) = I_{1−R}(m − k, k + 1)
    let below = if y == 0 {
        0.0
    } else if r <= 0.0 {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        beta_reg((m - y + 1) as f64, y as f64, 1.0 - r)
    };
    let at = log_likelihood(
        Family::Binomial,
        &ObservationTarget::Binomial { y, m },
        MeanParameter::Scalar(r),
        None,
    )
    .exp();
    (below, at)
}

/// Size information needed to draw an observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationSize {
    None,
    /// Binomial trials (active population `m`).
    Trials(u64),
    /// Multinomial total (sample size `n`).
    Total(u64),
}

/// Draws one observation from the family at the given mean parameter.
pub fn sample_observation<R: Rng + ?Sized>(
    family: Family,
    mean: MeanParameter,
    dispersion: Option<f64>,
    size: ObservationSize,
    rng: &mut R,
) -> ObservationTarget {
    match (family, mean) {
        (Family::Poisson, MeanParameter::Scalar(mu)) => {
            ObservationTarget::Count(draw_poisson(mu, rng))
        }
        (Family::NegativeBinomial, MeanParameter::Scalar(mu)) => {
            let phi = dispersion.expect("negbin needs φ");
            let lambda = Gamma::new(phi, mu / phi).expect("valid gamma").sample(rng);
            ObservationTarget::Count(draw_poisson(lambda, rng))
        }
        (Family::Binomial, MeanParameter::Scalar(r)) => {
            let m = match size {
                ObservationSize::Trials(m) | ObservationSize::Total(m) => m,
                ObservationSize::None => panic!("binomial draw needs a trial count"),
            };
            ObservationTarget::Binomial {
                y: draw_binomial(m, r, rng),
                m,
            }
        }
        (Family::Beta, MeanParameter::Scalar(mu)) => {
            let phi = dispersion.expect("beta needs φ");
            if mu <= 0.0 || mu >= 1.0 {
                return ObservationTarget::Rate(mu.clamp(0.0, 1.0));
            }
            let r = BetaDist::new(mu * phi, (1.0 - mu) * phi)
                .expect("valid beta")
                .sample(rng);
            ObservationTarget::Rate(r)
        }
        (Family::Multinomial, MeanParameter::Probabilities(p)) => {
            let n = match size {
                ObservationSize::Total(n) | ObservationSize::Trials(n) => n,
                ObservationSize::None => panic!("multinomial draw needs a total"),
            };
            // sequential conditional binomials
            let y0 = draw_binomial(n, p[0], rng);
            let rest = 1.0 - p[0];
            let y1 = if rest > 0.0 {
                draw_binomial(n - y0, (p[1] / rest).min(1.0), rng)
            } else {
                0
            };
            ObservationTarget::Multinomial([y0, y1, n - y0 - y1])
        }
        (Family::Gaussian { variance }, MeanParameter::Scalar(mu)) => ObservationTarget::Real(
            Normal::new(mu, variance.sqrt())
                .expect("valid normal")
                .sample(rng),
        ),
        _ => panic!("mean parameter does not match family {family}"),
    }
}

fn draw_poisson<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    PoissonDist::new(mu).expect("valid poisson").sample(rng) as u64
}

fn draw_binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    BinomialDist::new(n, p).expect("valid binomial").sample(rng)
}
