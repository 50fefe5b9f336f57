use saeb::diagnostics::{cpo, dic};
use saeb::inference::{fit, mcse_mean, MCMCConfig, Problem};
use saeb::likelihood::ObservationTarget;
use saeb::model::{
    CoefficientPrior, DesignMatrices, EffectStructure, Family, ModelSpec, OffsetRule,
    PredictorSpec, PriorSpec, INTERCEPT,
};
use statrs::function::gamma::ln_gamma;

const PRIOR_MEAN: f64 = 0.5;
const PRIOR_VARIANCE: f64 = 4.0;

fn poisson_toy(counts: &[u64]) -> Problem {
    let n = counts.len();
    let spec = ModelSpec {
        family: Family::Poisson,
        predictor: PredictorSpec {
            offset_rule: OffsetRule::None,
            effect_structure: EffectStructure::None,
            ..PredictorSpec::intercept_only(Family::Poisson)
        },
        priors: PriorSpec {
            intercept_prior: CoefficientPrior::Gaussian {
                mean: PRIOR_MEAN,
                variance: PRIOR_VARIANCE,
            },
            ..PriorSpec::default()
        },
        standardize: false,
    };
    let cells = (0..n).map(|t| (0, t)).collect();
    let design = DesignMatrices::from_parts(
        1,
        n,
        vec![1.0; n],
        vec![INTERCEPT.into()],
        vec![0.0; n],
        cells,
    )
    .unwrap();
    let targets = counts
        .iter()
        .map(|&y| ObservationTarget::Count(y))
        .collect();
    Problem::from_parts(spec, design, targets, None).unwrap()
}

fn config(prior_only: bool) -> MCMCConfig {
    MCMCConfig {
        num_chains: 2,
        iterations: 6000,
        burn_in: 1000,
        thin: 1,
        prior_only,
        ..MCMCConfig::default()
    }
}

fn log_evidence(counts: &[u64]) -> f64 {
    let (lo, hi, steps) = (-8.0, 8.0, 20_000);
    let h = (hi - lo) / steps as f64;
    let log_terms: Vec<f64> = (0..steps)
        .map(|s| {
            let b = lo + (s as f64 + 0.5) * h;
            let prior = -0.5 * (b - PRIOR_MEAN).powi(2) / PRIOR_VARIANCE
                - 0.5 * (2.0 * std::f64::consts::PI * PRIOR_VARIANCE).ln();
            let lik: f64 = counts
                .iter()
                .map(|&y| y as f64 * b - b.exp() - ln_gamma(y as f64 + 1.0))
                .sum();
            prior + lik
        })
        .collect();
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + (log_terms.iter().map(|l| (l - max).exp()).sum::<f64>() * h).ln()
}

#[test]
fn harmonic_mean_cpo_matches_leave_one_out_quadrature() {
    let counts = [3u64, 7, 5];
    let problem = poisson_toy(&counts);
    let samples = fit(&problem, &config(false)).unwrap();
    let estimated = cpo(&samples, &problem).unwrap();
    let full = log_evidence(&counts);
    for i in 0..counts.len() {
        let mut rest = counts.to_vec();
        rest.remove(i);
        let exact = (full - log_evidence(&rest)).exp();
        let rel = (estimated.values[i] - exact).abs() / exact;
        assert!(rel < 0.05, "obs {i}: {} vs {exact}", estimated.values[i]);
    }
}

#[test]
fn prior_only_chain_recovers_the_prior() {
    let problem = poisson_toy(&[40, 52, 47]);
    let samples = fit(&problem, &config(true)).unwrap();
    let chains = samples.draws(INTERCEPT).unwrap();
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let mcse = mcse_mean(&chains);
    assert!(
        (mean - PRIOR_MEAN).abs() < 4.0 * mcse,
        "mean {mean}, mcse {mcse}"
    );
    let centred: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| c.iter().map(|x| (x - PRIOR_MEAN).powi(2)).collect())
        .collect();
    let variance = centred.iter().flatten().sum::<f64>() / pooled.len() as f64;
    let mcse_var = mcse_mean(&centred);
    assert!(
        (variance - PRIOR_VARIANCE).abs() < 4.0 * mcse_var,
        "variance {variance}, mcse {mcse_var}"
    );
}

#[test]
fn effective_parameters_of_an_intercept_model_is_one() {
    let counts: Vec<u64> = (0..30).map(|i| 20 + (i * 7) % 11).collect();
    let problem = poisson_toy(&counts);
    let samples = fit(&problem, &config(false)).unwrap();
    let d = dic(&samples, &problem).unwrap();
    assert!((d.p_d - 1.0).abs() < 0.2, "p_D {}", d.p_d);
    assert!((d.dic - d.d_bar - d.p_d).abs() < 1e-9);
}
