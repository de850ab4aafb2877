use hostpar_core::models::{luchsinger_nonlinear, pure_death};
use hostpar_core::ode::{integrate, mild_residual, OdeSettings};
use hostpar_core::ssa::{simulate, sup_l1_error};
use hostpar_core::stats::Running;
use hostpar_core::tilde::{mean_identity_check, simulate_tilde};
use hostpar_core::{DensityVector, PopulationState};
use serde_json::json;

#[test]
fn pure_death_matches_exponential_decay() {
    let m = pure_death(&json!({"mu": 1.0})).unwrap();
    let sol = integrate(&m, &DensityVector::unit_mass(1), 1.0, &OdeSettings::default()).unwrap();
    assert!((sol.eval(1.0)[1] - (-1f64).exp()).abs() <= 1e-6);
    // interior points come from cubic Hermite dense output, accurate to O(h⁴)
    let tight = OdeSettings::with_tolerances(1e-11, 1e-10);
    let sol = integrate(&m, &DensityVector::unit_mass(1), 1.0, &tight).unwrap();
    for k in 0..=20 {
        let t = 0.05 * k as f64;
        let e = (sol.eval(t)[1] - (-t).exp()).abs();
        assert!(e <= 1e-7, "t = {t} err {e}");
    }
}

#[test]
fn catastrophe_model_keeps_host_mass() {
    let m = luchsinger_nonlinear(&json!({
        "lambda": 1.0, "mu": 1.0, "kappa": 1.0,
        "offspring": {"family": "poisson", "mean": 0.8}
    }))
    .unwrap();
    let settings = OdeSettings::default();
    let sol = integrate(&m, &DensityVector::from_values(vec![0.9, 0.1]), 2.0, &settings).unwrap();
    let tol = 10.0 * settings.rtol.max(settings.atol);
    for k in 0..=40 {
        let s: f64 = sol.eval(0.05 * k as f64).iter().sum();
        assert!((s - 1.0).abs() <= tol, "mass {s}");
    }
    let r = mild_residual(&sol, 2.0, 64).unwrap();
    assert!(r.residual < 1e-5, "{}", r.residual);
}

#[test]
fn sup_error_shrinks_with_population_size() {
    let m = luchsinger_nonlinear(&json!({
        "lambda": 1.0, "mu": 1.0, "kappa": 1.0,
        "offspring": {"family": "poisson", "mean": 0.8}
    }))
    .unwrap();
    let mean_error = |n: u64| {
        let s = PopulationState::from_pairs([(0, 9 * n / 10), (1, n / 10)]);
        let ode = integrate(&m, &s.scale(n).unwrap(), 1.0, &OdeSettings::default()).unwrap();
        let acc: Running = (0..40)
            .map(|r| sup_l1_error(&simulate(&m, &s, n, 1.0, r).unwrap(), &ode, n).unwrap().sup)
            .collect();
        acc.mean()
    };
    assert!(mean_error(1000) < mean_error(50));
}

#[test]
fn independent_sum_means_follow_the_trajectory() {
    let m = luchsinger_nonlinear(&json!({
        "lambda": 1.0, "mu": 1.0, "kappa": 0.5,
        "offspring": {"family": "point_mass", "at": 1}
    }))
    .unwrap();
    let s = PopulationState::from_pairs([(0, 15), (1, 3), (3, 2)]);
    let ode = integrate(&m, &s.scale(20).unwrap(), 1.0, &OdeSettings::default()).unwrap();
    let r = mean_identity_check(&m, &s, 20, 1.0, &ode, 2000, 17, &[0.5, 1.0], 4.0, 100.0).unwrap();
    assert!(r.passed, "{:?}", r.rows.iter().filter(|r| !r.within).collect::<Vec<_>>());
    // host count never changes in this model
    let p = simulate_tilde(&m, &s, 20, 1.0, &ode, 3).unwrap();
    assert_eq!(p.final_state().total_hosts(), 20);
}
