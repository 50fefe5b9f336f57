use crate::error::{Error, Result};
use crate::stats;

/// Split-chain potential scale reduction factor (Brooks–Gelman R̂).
///
/// Each chain is cut in half and the halves are treated as separate
/// chains. Returns `+∞` when the within-chain variance is zero but the
/// chains disagree, and 1 when every draw is identical.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::spec("PSRF needs at least two chains"));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 10 {
        return Err(Error::spec("PSRF needs at least ten draws per chain"));
    }
    let half = n / 2;
    let parts: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[half..2 * half]])
        .collect();
    let means: Vec<f64> = parts.iter().map(|p| stats::mean(p)).collect();
    let w = parts.iter().map(|p| stats::variance(p)).sum::<f64>() / parts.len() as f64;
    let b = half as f64 * stats::variance(&means);
    let nf = half as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok((var_plus / w).sqrt())
}

/// Multi-chain effective sample size (Geyer's initial monotone sequence on
/// the combined autocorrelation estimate).
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| stats::mean(&c[..n])).collect();
    let w = chains.iter().map(|c| stats::variance(&c[..n])).sum::<f64>() / m as f64;
    let b_over_n = if m > 1 { stats::variance(&means) } else { 0.0 };
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) {
        return (m * n) as f64;
    }
    let autocov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| {
                (0..n - lag)
                    .map(|i| (c[i] - mu) * (c[i + lag] - mu))
                    .sum::<f64>()
                    / nf
            })
            .sum::<f64>()
            / m as f64
    };
    let rho = |lag: usize| 1.0 - (w - autocov(lag)) / var_plus;
    let mut tau = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = (2.0 * tau - 1.0).max(1.0 / ((m * n) as f64).log10().max(1.0));
    (m * n) as f64 / tau
}

/// Monte-Carlo standard error of the posterior mean.
pub fn mcse_mean(chains: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = chains.concat();
    stats::std_dev(&pooled) / effective_sample_size(chains).sqrt()
}
