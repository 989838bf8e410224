//! Agreement between the simulators and the exact computations.

use cherry_core::analytic::survival;
use cherry_core::genfun::extinction_probability;
use cherry_core::model::{ModelParams, OffspringDist};
use cherry_core::montecarlo::{run_campaign, Campaign};
use cherry_core::oracle::{single_edge_life_mc, v_recursion};
use cherry_core::sim::RunConfig;

fn poisson() -> ModelParams {
    ModelParams::new(0.5, 0.5, 0.3, OffspringDist::ShiftedPoisson { rate: 1.0 }).unwrap()
}

#[test]
fn single_edge_joint_law_matches_recursion() {
    for m in [
        poisson(),
        ModelParams::new(1.0, 1.0, 0.5, OffspringDist::Constant { k: 1 }).unwrap(),
    ] {
        let mc = single_edge_life_mc(&m, 1_000_000, &[], 31);
        let joint = v_recursion(&m, 120);
        let tv = mc.total_variation(&joint);
        assert!(tv < 0.005, "total variation {tv}");
        let p0 = m.b() / (1.0 + m.b());
        let f0 = mc.died_before_birth as f64 / mc.reps as f64;
        assert!((f0 - p0).abs() < 4.0 * (p0 * (1.0 - p0) / mc.reps as f64).sqrt());
    }
}

#[test]
fn surviving_fraction_matches_extinction_probability() {
    let m = poisson();
    let reps = 400;
    let c = Campaign {
        params: m.clone(),
        run: RunConfig::steps(10_000),
        reps,
        master_seed: 123,
    };
    let runs = run_campaign(&c).unwrap();
    let q = extinction_probability(&m).unwrap().root;
    let surv = runs.iter().filter(|r| r.survived()).count() as f64 / reps as f64;
    let sd = (q * (1.0 - q) / reps as f64).sqrt();
    assert!((surv - (1.0 - q)).abs() < 3.0 * sd, "{surv} vs {}", 1.0 - q);
}

#[test]
fn initial_edge_lifetime_in_full_graph_follows_survival() {
    let m = ModelParams::new(1.0, 1.0, 0.5, OffspringDist::Constant { k: 1 }).unwrap();
    let t_max = 4.0;
    let reps = 20_000;
    let c = Campaign {
        params: m.clone(),
        run: RunConfig {
            n_max: None,
            t_max: Some(t_max),
            ..RunConfig::steps(1)
        },
        reps,
        master_seed: 55,
    };
    let runs = run_campaign(&c).unwrap();
    for t in [0.1, 0.25, 0.5, 1.0, 2.0, 3.0] {
        let alive = runs
            .iter()
            .filter(|r| r.first_edge_lifetime.is_none_or(|l| l > t))
            .count() as f64
            / reps as f64;
        let s = survival(&m, t).unwrap();
        let sd = (s * (1.0 - s) / reps as f64).sqrt();
        assert!((alive - s).abs() < 4.0 * sd, "t={t}: {alive} vs {s}");
    }
}
