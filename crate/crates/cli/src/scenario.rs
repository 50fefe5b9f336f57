//! `key = value` scenario files for `simulate`.

use saeb::model::{Family, TemporalPrior};
use saeb::simulate::{EpsilonDistribution, GraphSource, ScenarioConfig};

use crate::error::{CliError, CliResult};

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Engine(saeb::Error::Config {
        key: key.into(),
        message: msg.to_string(),
    })
}

fn number(key: &str, value: &str) -> CliResult<f64> {
    value
        .parse::<f64>()
        .map_err(|_| bad(key, format!("expected a number, got `{value}`")))
}

fn list(key: &str, value: &str) -> CliResult<Vec<f64>> {
    value.split(',').map(|v| number(key, v.trim())).collect()
}

/// Parsed lines of a scenario file, in file order.
pub fn parse_pairs(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(&format!("line {}", i + 1), "expected `key = value`"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// The family named in a scenario file, if any.
pub fn family_of(pairs: &[(String, String)]) -> CliResult<Option<Family>> {
    pairs
        .iter()
        .rev()
        .find(|(k, _)| k == "family")
        .map(|(_, v)| v.parse::<Family>().map_err(CliError::from))
        .transpose()
}

/// Applies scenario keys on top of `config`.
///
/// Keys: `regions`, `quarters`, `knn`, `intercept`, `employed_intercept`,
/// `slopes`, `precisions`, `phi`, `epsilon` (`gaussian` or `t`),
/// `epsilon_df`, `epsilon_scale`, `sample_min`, `sample_max`,
/// `sample_jitter`, `active_probability`, `temporal_prior`, `ar1_rho`,
/// `family`, `seed`.
pub fn apply(config: &mut ScenarioConfig, pairs: &[(String, String)]) -> CliResult<()> {
    for (key, value) in pairs {
        let k = key.as_str();
        match k {
            "family" => {}
            "seed" => {
                config.seed = value
                    .parse()
                    .map_err(|_| bad(k, format!("expected an integer, got `{value}`")))?
            }
            "regions" => config.num_regions = integer(k, value)?,
            "quarters" => config.num_quarters = integer(k, value)?,
            "knn" => {
                config.graph = GraphSource::RandomKnn {
                    k: integer(k, value)?,
                }
            }
            "intercept" => {
                let last = config.coefficients.len() - 1;
                config.coefficients[last][0] = number(k, value)?;
            }
            "employed_intercept" => {
                if config.family != Family::Multinomial {
                    return Err(bad(k, "only the multinomial has an employed predictor"));
                }
                config.coefficients[0][0] = number(k, value)?;
            }
            "slopes" => {
                let slopes = list(k, value)?;
                let last = config.coefficients.len() - 1;
                let target = &mut config.coefficients[last];
                if slopes.len() + 1 != target.len() {
                    return Err(bad(
                        k,
                        format!("expected {} slopes, got {}", target.len() - 1, slopes.len()),
                    ));
                }
                target[1..].copy_from_slice(&slopes);
            }
            "precisions" => config.precisions = list(k, value)?,
            "phi" => config.dispersion = Some(number(k, value)?),
            "epsilon" => {
                config.epsilon = match value.as_str() {
                    "gaussian" => EpsilonDistribution::Gaussian,
                    "t" => match config.epsilon {
                        e @ EpsilonDistribution::StudentT { .. } => e,
                        EpsilonDistribution::Gaussian => EpsilonDistribution::StudentT {
                            df: 1.0,
                            scale: 0.3,
                        },
                    },
                    _ => return Err(bad(k, format!("expected gaussian or t, got `{value}`"))),
                }
            }
            "epsilon_df" | "epsilon_scale" => {
                let v = number(k, value)?;
                let (mut df, mut scale) = match config.epsilon {
                    EpsilonDistribution::StudentT { df, scale } => (df, scale),
                    EpsilonDistribution::Gaussian => (1.0, 0.3),
                };
                if k == "epsilon_df" {
                    df = v;
                } else {
                    scale = v;
                }
                config.epsilon = EpsilonDistribution::StudentT { df, scale };
            }
            "sample_min" => config.sample_size.min = number(k, value)?,
            "sample_max" => config.sample_size.max = number(k, value)?,
            "sample_jitter" => config.sample_size.jitter = number(k, value)?,
            "active_probability" => config.sample_size.active_probability = number(k, value)?,
            "temporal_prior" => {
                config.temporal_prior = match value.as_str() {
                    "rw1" => TemporalPrior::Rw1,
                    "ar1" => TemporalPrior::Ar1 { rho: 0.9 },
                    _ => return Err(bad(k, format!("expected rw1 or ar1, got `{value}`"))),
                }
            }
            "ar1_rho" => {
                config.temporal_prior = TemporalPrior::Ar1 {
                    rho: number(k, value)?,
                }
            }
            other => return Err(bad(other, "unknown key")),
        }
    }
    Ok(())
}

fn integer(key: &str, value: &str) -> CliResult<usize> {
    value
        .parse()
        .map_err(|_| bad(key, format!("expected a positive integer, got `{value}`")))
}
