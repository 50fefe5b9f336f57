use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use saeb::data::{read_panel, write_panel, RegionGraph};
use saeb::model::Family;
use saeb::simulate::{draw_icar, simulate, ScenarioConfig};

fn config(family: Family, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        ..ScenarioConfig::default_for(family)
    }
}

#[test]
fn panel_counts_are_consistent_for_every_family() {
    for family in [
        Family::Poisson,
        Family::NegativeBinomial,
        Family::Binomial,
        Family::Beta,
        Family::Multinomial,
    ] {
        let sim = simulate(&config(family, 11)).unwrap();
        let data = &sim.dataset;
        assert_eq!(data.num_cells(), 28 * 12);
        for (i, obs) in data.observations().iter().enumerate() {
            assert_eq!(data.cell_index(obs.region, obs.quarter), i);
            assert!(obs.unemployed <= obs.active());
            assert_eq!(
                obs.unemployed + obs.employed + obs.inactive,
                obs.sample_size()
            );
            assert!(obs.sample_size() >= 1);
        }
        assert!(
            sim.truth.rates.iter().all(|&r| r > 0.0 && r < 1.0),
            "{family:?}"
        );
        assert_eq!(sim.truth.rates.len(), 28 * 12);
    }
}

#[test]
fn panel_survives_a_write_read_round_trip() {
    let cfg = config(Family::Binomial, 3);
    let sim = simulate(&cfg).unwrap();
    let mut buf = Vec::new();
    write_panel(&sim.dataset, &mut buf).unwrap();
    let back = read_panel(
        buf.as_slice(),
        &cfg.covariates.schema(),
        Path::new("panel.csv"),
    )
    .unwrap();
    assert_eq!(back, sim.dataset);
}

#[test]
fn icar_draws_are_spatially_correlated() {
    let graph = RegionGraph::portugal_nuts3();
    let n = graph.num_regions();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reps = 2000;
    let (mut neighbour, mut distant) = (0.0, 0.0);
    let (mut neighbour_pairs, mut distant_pairs) = (0usize, 0usize);
    let mut moran = 0.0;
    for _ in 0..reps {
        let w = draw_icar(&graph, 1.0, &mut rng);
        let sq: f64 = w.iter().map(|x| x * x).sum();
        let edges: Vec<_> = graph.edges().collect();
        let cross: f64 = edges.iter().map(|&(i, k)| w[i] * w[k]).sum();
        moran += (n as f64 / edges.len() as f64) * cross / sq;
        for i in 0..n {
            for k in (i + 1)..n {
                if graph.neighbors(i).contains(&k) {
                    neighbour += w[i] * w[k];
                    neighbour_pairs += 1;
                } else {
                    distant += w[i] * w[k];
                    distant_pairs += 1;
                }
            }
        }
    }
    let neighbour = neighbour / neighbour_pairs as f64;
    let distant = distant / distant_pairs as f64;
    assert!(neighbour > distant, "{neighbour} vs {distant}");
    assert!(
        moran / reps as f64 > 0.2,
        "mean Moran's I {}",
        moran / reps as f64
    );
}
