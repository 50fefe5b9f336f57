use proptest::prelude::*;
use saeb::likelihood::{
    grad_log_likelihood_eta, log_likelihood, log_likelihood_eta, mean_from_eta, predictive_cdf,
    sample_observation, MeanParameter, ObservationSize, ObservationTarget,
};
use saeb::model::{multinomial_probabilities, Family};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0) < tol
}

#[test]
fn negbin_tends_to_poisson_as_dispersion_grows() {
    for mu in [0.3, 4.0, 25.0] {
        for y in [0u64, 1, 5, 30] {
            let pois = log_likelihood(
                Family::Poisson,
                &ObservationTarget::Count(y),
                MeanParameter::Scalar(mu),
                None,
            );
            let nb = log_likelihood(
                Family::NegativeBinomial,
                &ObservationTarget::Count(y),
                MeanParameter::Scalar(mu),
                Some(1e9),
            );
            assert!((pois - nb).abs() < 1e-5, "mu {mu} y {y}: {pois} vs {nb}");
        }
    }
}

#[test]
fn beta_rate_cdf_is_increasing() {
    let cdf = |r: f64| {
        predictive_cdf(
            Family::Beta,
            &ObservationTarget::Rate(r),
            MeanParameter::Scalar(0.2),
            Some(50.0),
        )
        .0
    };
    let mut last = 0.0;
    for i in 1..100 {
        let c = cdf(i as f64 / 100.0);
        assert!(c >= last);
        last = c;
    }
    assert!(last > 0.999);
}

proptest! {
    #[test]
    fn multinomial_marginal_is_binomial(
        n in 0u64..40,
        frac in 0.0f64..1.0,
        e0 in -3.0f64..3.0,
        e1 in -3.0f64..3.0,
    ) {
        let y = ((n as f64) * frac).floor() as u64;
        let p = multinomial_probabilities([e0, e1]);
        let marginal: f64 = (0..=n - y)
            .map(|a| {
                let t = ObservationTarget::Multinomial([a, y, n - y - a]);
                log_likelihood(Family::Multinomial, &t, MeanParameter::Probabilities(p), None).exp()
            })
            .sum();
        let binom = log_likelihood(Family::Binomial, &ObservationTarget::Binomial { y, m: n }, MeanParameter::Scalar(p[1]), None).exp();
        prop_assert!((marginal - binom).abs() < 1e-12, "{marginal} vs {binom}");
    }

    #[test]
    fn eta_and_mean_parameterisations_agree(eta in -5.0f64..-0.01, y in 0u64..100, phi in 0.5f64..200.0) {
        let t = ObservationTarget::Count(y);
        for family in [Family::Poisson, Family::NegativeBinomial] {
            let mean = mean_from_eta(family, &[eta], Some(phi)).unwrap();
            let a = log_likelihood_eta(family, &t, &[eta], Some(phi));
            let b = log_likelihood(family, &t, mean, Some(phi));
            prop_assert!(close(a, b, 1e-12));
        }
    }

    #[test]
    fn count_gradients_match_finite_differences(eta in -4.0f64..-0.05, y in 0u64..300, phi in 0.5f64..300.0) {
        let t = ObservationTarget::Count(y);
        for family in [Family::Poisson, Family::NegativeBinomial] {
            let g = grad_log_likelihood_eta(family, &t, &[eta], Some(phi))[0];
            let n = fd(|e| log_likelihood_eta(family, &t, &[e], Some(phi)), eta, 1e-5);
            prop_assert!(close(g, n, 1e-6), "{family:?}: {g} vs {n}");
        }
    }

    #[test]
    fn rate_gradients_match_finite_differences(eta in -5.0f64..3.0, m in 1u64..3000, frac in 0.0f64..1.0, r in 0.01f64..0.99, phi in 1.0f64..500.0) {
        let y = ((m as f64) * frac).floor() as u64;
        let t = ObservationTarget::Binomial { y, m };
        let g = grad_log_likelihood_eta(Family::Binomial, &t, &[eta], None)[0];
        let n = fd(|e| log_likelihood_eta(Family::Binomial, &t, &[e], None), eta, 1e-5);
        prop_assert!(close(g, n, 1e-6), "binomial: {g} vs {n}");
        let t = ObservationTarget::Rate(r);
        let g = grad_log_likelihood_eta(Family::Beta, &t, &[eta], Some(phi))[0];
        let n = fd(|e| log_likelihood_eta(Family::Beta, &t, &[e], Some(phi)), eta, 1e-5);
        prop_assert!(close(g, n, 1e-6), "beta: {g} vs {n}");
    }

    #[test]
    fn multinomial_gradient_matches_finite_differences(
        e0 in -4.0f64..4.0,
        e1 in -4.0f64..4.0,
        y in proptest::array::uniform3(0u64..400),
    ) {
        let t = ObservationTarget::Multinomial(y);
        let g = grad_log_likelihood_eta(Family::Multinomial, &t, &[e0, e1], None);
        let d0 = fd(|e| log_likelihood_eta(Family::Multinomial, &t, &[e, e1], None), e0, 1e-5);
        let d1 = fd(|e| log_likelihood_eta(Family::Multinomial, &t, &[e0, e], None), e1, 1e-5);
        prop_assert!(close(g[0], d0, 1e-6) && close(g[1], d1, 1e-6), "{g:?} vs [{d0}, {d1}]");
    }

    #[test]
    fn discrete_cdf_pieces_are_consistent(mu in 0.1f64..60.0, y in 0u64..80, phi in 0.5f64..100.0) {
        for (family, disp) in [(Family::Poisson, None), (Family::NegativeBinomial, Some(phi))] {
            let t = ObservationTarget::Count(y);
            let (below, at) = predictive_cdf(family, &t, MeanParameter::Scalar(mu), disp);
            let (next_below, _) = predictive_cdf(family, &ObservationTarget::Count(y + 1), MeanParameter::Scalar(mu), disp);
            prop_assert!((0.0..=1.0).contains(&below) && below + at <= 1.0 + 1e-12);
            prop_assert!((below + at - next_below).abs() < 1e-9, "{family:?}: {below} + {at} vs {next_below}");
        }
    }

    #[test]
    fn draws_stay_in_support(seed in 0u64..1000, eta in -4.0f64..1.0, n in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = 1.0 / (1.0 + (-eta).exp());
        match sample_observation(Family::Binomial, MeanParameter::Scalar(r), None, ObservationSize::Trials(n), &mut rng) {
            ObservationTarget::Binomial { y, m } => prop_assert!(y <= m && m == n),
            other => prop_assert!(false, "unexpected {other:?}"),
        }
        match sample_observation(Family::Beta, MeanParameter::Scalar(r), Some(30.0), ObservationSize::None, &mut rng) {
            ObservationTarget::Rate(x) => prop_assert!((0.0..=1.0).contains(&x)),
            other => prop_assert!(false, "unexpected {other:?}"),
        }
        let p = multinomial_probabilities([eta, -eta]);
        match sample_observation(Family::Multinomial, MeanParameter::Probabilities(p), None, ObservationSize::Total(n), &mut rng) {
            ObservationTarget::Multinomial(y) => prop_assert_eq!(y.iter().sum::<u64>(), n),
            other => prop_assert!(false, "unexpected {other:?}"),
        }
    }
}
