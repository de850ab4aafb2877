use hostpar_core::coupling::{simulate_coupled, CouplingOptions};
use hostpar_core::models::{luchsinger_linear, luchsinger_nonlinear, ModelRegistry};
use hostpar_core::ode::{integrate, OdeSettings};
use hostpar_core::ssa::simulate;
use hostpar_core::state::{lemma_a1_sides, BoundM};
use hostpar_core::tilde::tilde_ensemble;
use hostpar_core::{ModelSpec, Norms, PopulationState};
use proptest::prelude::*;
use serde_json::json;

fn nonlinear() -> ModelSpec {
    luchsinger_nonlinear(&json!({
        "lambda": 1.5, "mu": 1.0, "kappa": 0.5,
        "offspring": {"family": "poisson", "mean": 0.8}
    }))
    .unwrap()
}

fn linear() -> ModelSpec {
    luchsinger_linear(&json!({
        "lambda": 1.0, "mu": 1.0, "kappa": 0.5,
        "offspring": {"family": "poisson", "mean": 0.8}
    }))
    .unwrap()
}

fn small_state() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..6, 1..6).prop_filter("nonempty", |v| v.iter().sum::<u64>() > 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dense_round_trip(counts in prop::collection::vec(0u64..50, 0..20)) {
        let s = PopulationState::from_dense(&counts);
        prop_assert_eq!(s.total_hosts(), counts.iter().sum::<u64>());
        let back = s.to_dense();
        let k = back.len();
        prop_assert_eq!(&back[..], &counts[..k]);
        prop_assert!(counts[k..].iter().all(|&c| c == 0));
    }

    #[test]
    fn sqrt_mass_inequalities(
        raw in prop::collection::vec(0.0f64..1.0, 1..30),
        m in 1.0f64..15.0,
        n in 9u64..100_000,
    ) {
        let mass: f64 = raw.l11_norm();
        let u: Vec<f64> = if mass > m { raw.iter().map(|v| v * (m / mass) * (1.0 - 1e-12)).collect() } else { raw };
        let sides = lemma_a1_sides(&u, BoundM::new(m, n).unwrap()).unwrap();
        for s in sides {
            prop_assert!(s.holds(), "{} > {}", s.lhs, s.rhs);
        }
    }

    #[test]
    fn catastrophe_model_conserves_hosts(counts in small_state(), seed in any::<u64>()) {
        let s = PopulationState::from_dense(&counts);
        let n = s.total_hosts();
        let path = simulate(&nonlinear(), &s, n, 1.0, seed).unwrap();
        let times: Vec<f64> = path.jumps().iter().map(|j| j.time).collect();
        for c in path.counts_at(&times) {
            prop_assert_eq!(c.iter().sum::<u64>(), n);
        }
        prop_assert_eq!(path.replay(), path.final_state().clone());
    }

    #[test]
    fn coupled_gap_is_bounded_by_decoupled_count(counts in small_state(), seed in any::<u64>(), which in 0usize..2) {
        let model = if which == 0 { nonlinear() } else { linear() };
        let s = PopulationState::from_dense(&counts);
        let n = s.total_hosts();
        let ode = integrate(&model, &s.scale(n).unwrap(), 1.0, &OdeSettings::default()).unwrap();
        let opts = CouplingOptions { track_compensator: false, ..CouplingOptions::default() };
        let run = simulate_coupled(&model, &s, n, 1.0, &ode, seed, &opts).unwrap();
        let (x, y) = (run.final_state.x().to_dense(), run.final_state.tilde().to_dense());
        let len = x.len().max(y.len());
        let gap: u64 = (0..len)
            .map(|i| x.get(i).copied().unwrap_or(0).abs_diff(y.get(i).copied().unwrap_or(0)))
            .sum();
        prop_assert!(gap <= 2 * run.v_final());
        prop_assert_eq!(run.x_path.final_state(), &run.final_state.x());
        prop_assert_eq!(run.tilde_path.final_state(), &run.final_state.tilde());
    }

    #[test]
    fn adding_replicas_keeps_earlier_ones(seed in any::<u64>()) {
        let model = nonlinear();
        let s = PopulationState::from_pairs([(0, 6), (2, 2)]);
        let ode = integrate(&model, &s.scale(8).unwrap(), 0.5, &OdeSettings::default()).unwrap();
        let few = tilde_ensemble(&model, &s, 8, 0.5, &ode, 2, seed, &[0.25, 0.5]).unwrap();
        let more = tilde_ensemble(&model, &s, 8, 0.5, &ode, 4, seed, &[0.25, 0.5]).unwrap();
        prop_assert_eq!(&few[..], &more[..2]);
    }
}

#[test]
fn registry_builds_every_listed_model_by_name() {
    let reg = ModelRegistry::default();
    let names: Vec<String> = reg.names().map(str::to_string).collect();
    assert!(names.len() >= 7);
    assert!(reg.build("no_such_model", &json!({})).is_err());
    assert_eq!(reg.build("null", &json!(null)).unwrap().name(), "null");
}
