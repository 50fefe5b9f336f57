use proptest::prelude::*;
use saeb::data::RegionGraph;
use saeb::latent::{
    ar1_gradient, ar1_logdensity, icar_gradient, icar_logdensity, iid_gradient, iid_logdensity,
    rw1_gradient, rw1_logdensity,
};

fn fd(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-3;
    let (mut up, mut down) = (x.to_vec(), x.to_vec());
    up[i] += h;
    down[i] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0) < 1e-6
}

proptest! {
    #[test]
    fn icar_gradient_and_shift_invariance(
        w in proptest::collection::vec(-2.0f64..2.0, 28),
        tau in 0.1f64..200.0,
        shift in -5.0f64..5.0,
    ) {
        let g = RegionGraph::portugal_nuts3();
        let grad = icar_gradient(&w, tau, &g);
        for i in 0..w.len() {
            prop_assert!(close(grad[i], fd(|x| icar_logdensity(x, tau, &g), &w, i)));
        }
        let moved: Vec<f64> = w.iter().map(|x| x + shift).collect();
        prop_assert!((icar_logdensity(&moved, tau, &g) - icar_logdensity(&w, tau, &g)).abs() < 1e-8);
        prop_assert!(grad.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn temporal_and_iid_gradients(
        w in proptest::collection::vec(-2.0f64..2.0, 2..20),
        tau in 0.1f64..200.0,
        rho in -0.95f64..0.95,
    ) {
        let rw = rw1_gradient(&w, tau);
        let ar = ar1_gradient(&w, tau, rho);
        let iid = iid_gradient(&w, tau);
        for i in 0..w.len() {
            prop_assert!(close(rw[i], fd(|x| rw1_logdensity(x, tau).unwrap(), &w, i)));
            prop_assert!(close(ar[i], fd(|x| ar1_logdensity(x, tau, rho), &w, i)));
            prop_assert!(close(iid[i], fd(|x| iid_logdensity(x, tau), &w, i)));
        }
    }

    #[test]
    fn ar1_with_zero_correlation_is_iid(w in proptest::collection::vec(-3.0f64..3.0, 1..20), tau in 0.1f64..50.0) {
        prop_assert!((ar1_logdensity(&w, tau, 0.0) - iid_logdensity(&w, tau)).abs() < 1e-9);
    }
}
