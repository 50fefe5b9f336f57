//! Gaussian (intrinsic and proper) priors on the random-effect vectors.

use std::f64::consts::PI;

use crate::data::RegionGraph;
use crate::error::{Error, Result};

/// `Σ_{i~k, i<k} (w_i − w_k)²`.
pub fn icar_quadratic_form(w: &[f64], graph: &RegionGraph) -> f64 {
    graph.edges().map(|(i, k)| (w[i] - w[k]).powi(2)).sum()
}

/// Besag ICAR log density with rank `J − 1` normalisation (connected graph).
pub fn icar_logdensity(w: &[f64], tau: f64, graph: &RegionGraph) -> f64 {
    debug_assert_eq!(w.len(), graph.num_regions());
    let rank = (graph.num_regions() - 1) as f64;
    0.5 * rank * (tau / (2.0 * PI)).ln() - 0.5 * tau * icar_quadratic_form(w, graph)
}

/// `∂/∂w` of [`icar_logdensity`]: `−τ (D − A) w`.
pub fn icar_gradient(w: &[f64], tau: f64, graph: &RegionGraph) -> Vec<f64> {
    (0..w.len())
        .map(|i| {
            let s: f64 = graph.neighbors(i).iter().map(|&k| w[i] - w[k]).sum();
            -tau * s
        })
        .collect()
}

/// `Σ_{t≥2} (w_t − w_{t−1})²`.
pub fn rw1_quadratic_form(w: &[f64]) -> f64 {
    w.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum()
}

/// Intrinsic first-order random walk log density, rank `T − 1`.
pub fn rw1_logdensity(w: &[f64], tau: f64) -> Result<f64> {
    if w.len() < 2 {
        return Err(Error::spec(
            "a first-order random walk needs at least two time points",
        ));
    }
    let rank = (w.len() - 1) as f64;
    Ok(0.5 * rank * (tau / (2.0 * PI)).ln() - 0.5 * tau * rw1_quadratic_form(w))
}

pub fn rw1_gradient(w: &[f64], tau: f64) -> Vec<f64> {
    let n = w.len();
    (0..n)
        .map(|t| {
            let mut s = 0.0;
            if t > 0 {
                s += w[t] - w[t - 1];
            }
            if t + 1 < n {
                s += w[t] - w[t + 1];
            }
            -tau * s
        })
        .collect()
}

/// `(1 − ρ²) w₁² + Σ_{t≥2} (w_t − ρ w_{t−1})²`.
pub fn ar1_quadratic_form(w: &[f64], rho: f64) -> f64 {
    let head = w.first().map_or(0.0, |x| (1.0 - rho * rho) * x * x);
    head + w
        .windows(2)
        .map(|p| (p[1] - rho * p[0]).powi(2))
        .sum::<f64>()
}

/// Stationary AR(1) with innovation precision `τ` and fixed `|ρ| < 1`.
pub fn ar1_logdensity(w: &[f64], tau: f64, rho: f64) -> f64 {
    let n = w.len() as f64;
    0.5 * n * (tau / (2.0 * PI)).ln() + 0.5 * (1.0 - rho * rho).ln()
        - 0.5 * tau * ar1_quadratic_form(w, rho)
}

pub fn ar1_gradient(w: &[f64], tau: f64, rho: f64) -> Vec<f64> {
    let n = w.len();
    (0..n)
        .map(|t| {
            let mut s = if t == 0 {
                (1.0 - rho * rho) * w[0]
            } else {
                w[t] - rho * w[t - 1]
            };
            if t + 1 < n {
                s -= rho * (w[t + 1] - rho * w[t]);
            }
            -tau * s
        })
        .collect()
}

pub fn iid_logdensity(x: &[f64], tau: f64) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    0.5 * x.len() as f64 * (tau / (2.0 * PI)).ln() - 0.5 * tau * sq
}

pub fn iid_gradient(x: &[f64], tau: f64) -> Vec<f64> {
    x.iter().map(|v| -tau * v).collect()
}

/// Subtracts the mean.
pub fn center(w: &[f64]) -> Vec<f64> {
    let mut out = w.to_vec();
    center_in_place(&mut out);
    out
}

pub fn center_in_place(w: &mut [f64]) {
    if w.is_empty() {
        return;
    }
    let m = w.iter().sum::<f64>() / w.len() as f64;
    for v in w.iter_mut() {
        *v -= m;
    }
}
