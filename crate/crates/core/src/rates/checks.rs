//! Sampled numerical certificates for the growth, tail, boundedness and
//! Lipschitz hypotheses on a model's rates.
//!
//! These checks evaluate both sides of each inequality on finitely many
//! inputs. A pass is evidence, not a proof.

use rand::Rng;
use serde::Serialize;

use super::baseline::{truncated_generator, BaselineGenerator};
use super::interaction::{alpha_l1_difference, beta_l1_difference, pos, ModelSpec};
use crate::error::StateError;
use crate::expm::expm;
use crate::rng::rng_from_seed;
use crate::state::Norms;

/// One row of a certificate report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub condition: String,
    /// Largest observed `lhs / rhs` (or the margin, for margin checks).
    pub value: f64,
    pub passed: bool,
    pub samples: usize,
    pub note: String,
}

impl CheckRow {
    pub fn new(condition: impl Into<String>, value: f64, passed: bool, samples: usize) -> Self {
        Self {
            condition: condition.into(),
            value,
            passed,
            samples,
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthViolation {
    pub load: usize,
    pub exit_rate: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub i_max: usize,
    pub max_ratio: f64,
    pub first_violation: Option<GrowthViolation>,
}

impl GrowthReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn row(&self) -> CheckRow {
        let row = CheckRow::new("baseline_growth", self.max_ratio, self.passed(), self.i_max + 1);
        match &self.first_violation {
            Some(v) => row.with_note(format!("first violation at load {}", v.load)),
            None => row,
        }
    }
}

/// Checks `α*(i) + δ̄ᵢ ≤ m1 (i+1)^m2` for `0 ≤ i ≤ i_max`.
pub fn check_growth(baseline: &BaselineGenerator, i_max: usize) -> GrowthReport {
    let mut max_ratio: f64 = 0.0;
    let mut first_violation = None;
    for i in 0..=i_max {
        let lhs = baseline.exit_rate(i);
        let rhs = baseline.growth_bound(i);
        max_ratio = max_ratio.max(lhs / rhs);
        if lhs > rhs * (1.0 + 1e-12) && first_violation.is_none() {
            first_violation = Some(GrowthViolation {
                load: i,
                exit_rate: lhs,
                bound: rhs,
            });
        }
    }
    GrowthReport {
        i_max,
        max_ratio,
        first_violation,
    }
}

/// Largest baseline rate into each target `j ≤ j_max` from sources in
/// `(l_max/2, l_max]`. Only a finite horizon can be inspected; a finite value
/// everywhere is reported as a pass.
pub fn check_tail_limsup(baseline: &BaselineGenerator, l_max: usize, j_max: usize) -> CheckRow {
    let mut moves = Vec::new();
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    for l in (l_max / 2 + 1)..=l_max {
        baseline.moves(l, &mut moves);
        for &(j, r) in &moves {
            if j <= j_max {
                worst = worst.max(r);
                samples += 1;
            }
        }
    }
    CheckRow::new("baseline_tail_limsup", worst, worst.is_finite(), samples).with_note(format!(
        "sup over sources in ({}, {l_max}] into targets <= {j_max}; finite horizon only",
        l_max / 2
    ))
}

/// Sampler settings for [`check_lipschitz_sampled`].
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct LipschitzSampler {
    pub pairs: usize,
    /// Number of occupied loads in each sampled density.
    pub support: usize,
    /// Largest occupied load.
    pub max_load: usize,
    /// Sampled densities have host mass `‖x‖₁` uniform on `(0, max_mass]`.
    pub max_mass: f64,
    /// Truncation level of the infinite sums.
    pub truncation: usize,
    pub seed: u64,
}

impl Default for LipschitzSampler {
    fn default() -> Self {
        Self {
            pairs: 200,
            support: 6,
            max_load: 12,
            max_mass: 2.0,
            truncation: 200,
            seed: 0x5eed,
        }
    }
}

struct Worst {
    ratio: f64,
    passed: bool,
    samples: usize,
}

impl Worst {
    fn new() -> Self {
        Self {
            ratio: 0.0,
            passed: true,
            samples: 0,
        }
    }

    /// Records `lhs ≤ rhs + slack`.
    fn record(&mut self, lhs: f64, rhs: f64, slack: f64) {
        self.samples += 1;
        let bound = rhs + slack;
        let tol = 1e-12 * (1.0 + bound.abs());
        let ratio = if bound > 0.0 {
            lhs / bound
        } else if lhs <= tol {
            0.0
        } else {
            f64::INFINITY
        };
        self.ratio = self.ratio.max(ratio);
        if lhs > bound + tol {
            self.passed = false;
        }
    }

    fn row(&self, name: &str) -> CheckRow {
        CheckRow::new(name, self.ratio, self.passed, self.samples)
    }
}

fn random_density(cfg: &LipschitzSampler, rng: &mut impl Rng) -> Vec<f64> {
    let mut x = vec![0.0; cfg.max_load + 1];
    for _ in 0..cfg.support.max(1) {
        let l = rng.random_range(0..=cfg.max_load);
        x[l] += rng.random::<f64>();
    }
    let mass = cfg.max_mass * (1.0 - rng.random::<f64>());
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        for v in &mut x {
            *v *= mass / s;
        }
    }
    x
}

fn l1_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

fn l11_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .enumerate()
        .map(|(i, (a, b))| (i as f64 + 1.0) * (a - b).abs())
        .sum()
}

/// Weighted `Σ_{l≤cap} (l+1)|r_x(l) − r_y(l)|` and a tail bound from the
/// closed-form moments when the model provides them.
fn weighted_difference(rx: &[f64], ry: &[f64], mx: Option<f64>, my: Option<f64>) -> (f64, f64) {
    let mut lhs = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (l, (a, b)) in rx.iter().zip(ry).enumerate() {
        let w = l as f64 + 1.0;
        lhs += w * (a - b).abs();
        sx += w * a;
        sy += w * b;
    }
    let slack = match (mx, my) {
        (Some(mx), Some(my)) => pos(mx - sx) + pos(my - sy),
        _ => 0.0,
    };
    (lhs, slack)
}

/// Sampled certificate for the boundedness and Lipschitz conditions on
/// `α`, `β` and `δ` at the model's declared envelopes.
///
/// Rows: `alpha_at_zero`, `alpha_weighted_at_zero`, `beta_weighted_at_zero`,
/// `delta_at_zero`, `alpha_host_lipschitz`, `alpha_parasite_lipschitz`,
/// `beta_host_lipschitz`, `beta_parasite_lipschitz`, `delta_lipschitz`.
/// Values are the largest observed `lhs / (rhs + truncation slack)`.
pub fn check_lipschitz_sampled(model: &ModelSpec, cfg: &LipschitzSampler) -> Vec<CheckRow> {
    let inter = model.interaction();
    let env = model.envelopes();
    let cap = cfg.truncation.max(cfg.max_load + 1);
    let mut rng = rng_from_seed(cfg.seed);
    let zero = vec![0.0; cfg.max_load + 1];

    let mut names = [
        "alpha_at_zero",
        "alpha_weighted_at_zero",
        "beta_weighted_at_zero",
        "delta_at_zero",
        "alpha_host_lipschitz",
        "alpha_parasite_lipschitz",
        "beta_host_lipschitz",
        "beta_parasite_lipschitz",
        "delta_lipschitz",
    ]
    .map(|n| (n, Worst::new()));

    let mut scratch = (Vec::new(), Vec::new());
    let mut row = Vec::new();
    for i in 0..=cfg.max_load {
        if !inter.alpha_active(i) {
            continue;
        }
        inter.alpha_row(i, &zero, cap, &mut row);
        let total = inter.alpha_total(i, &zero);
        names[0].1.record(total, env.a00, 0.0);
        let moment = inter.alpha_moment(i, &zero);
        let (weighted, slack) = weighted_difference(&row, &vec![0.0; row.len()], moment, Some(0.0));
        names[1].1.record(weighted, (i as f64 + 1.0) * env.a10, slack);
    }
    if inter.has_immigration() {
        inter.beta_row(&zero, cap, &mut row);
        let (weighted, slack) =
            weighted_difference(&row, &vec![0.0; row.len()], inter.beta_moment(&zero), Some(0.0));
        names[2].1.record(weighted, env.b10, slack);
    }
    for i in 0..=cfg.max_load {
        if inter.delta_active(i) {
            names[3].1.record(inter.delta(i, &zero), env.d0, 0.0);
        }
    }

    let (mut rx, mut ry) = (Vec::new(), Vec::new());
    for k in 0..cfg.pairs {
        let x = random_density(cfg, &mut rng);
        let y = if k % 2 == 0 {
            random_density(cfg, &mut rng)
        } else {
            let eps = 10f64.powf(-rng.random_range(1.0..6.0));
            x.iter()
                .map(|v| pos(v + eps * (rng.random::<f64>() - 0.5)))
                .collect()
        };
        let d1 = l1_diff(&x, &y);
        let d11 = l11_diff(&x, &y);
        let z = x.l11_norm().min(y.l11_norm());

        for i in 0..=cfg.max_load {
            if !inter.alpha_active(i) {
                continue;
            }
            let (lhs, slack) = alpha_l1_difference(inter, i, &x, &y, cap, &mut scratch);
            names[4].1.record(lhs, env.a01.eval(z) * d1, slack);
            inter.alpha_row(i, &x, cap, &mut rx);
            inter.alpha_row(i, &y, cap, &mut ry);
            let (lhs, slack) =
                weighted_difference(&rx, &ry, inter.alpha_moment(i, &x), inter.alpha_moment(i, &y));
            names[5]
                .1
                .record(lhs, (i as f64 + 1.0) * env.a11.eval(z) * d11, slack);
        }
        if inter.has_immigration() {
            let (lhs, slack) = beta_l1_difference(inter, &x, &y, cap, &mut scratch);
            names[6].1.record(lhs, env.b01.eval(z) * d1, slack);
            inter.beta_row(&x, cap, &mut rx);
            inter.beta_row(&y, cap, &mut ry);
            let (lhs, slack) =
                weighted_difference(&rx, &ry, inter.beta_moment(&x), inter.beta_moment(&y));
            names[7].1.record(lhs, env.b11.eval(z) * d11, slack);
        }
        let mut worst_delta: f64 = 0.0;
        let mut any_delta = false;
        for i in 0..=cfg.max_load {
            if inter.delta_active(i) {
                any_delta = true;
                worst_delta = worst_delta.max((inter.delta(i, &x) - inter.delta(i, &y)).abs());
            }
        }
        if any_delta {
            names[8].1.record(worst_delta, env.d1.eval(z) * d1, 0.0);
        }
    }

    names.iter().map(|(n, w)| w.row(n)).collect()
}

/// `E⁰ᵢ(W(t)+1) = Σ_j (j+1) p_ij(t)` on the truncation `0..=j_cap`, from the
/// dense exponential of the truncated generator. Mass leaving the truncation
/// is dropped, so the value is a lower bound of the untruncated moment.
pub fn semigroup_moment(
    baseline: &BaselineGenerator,
    load: usize,
    t: f64,
    j_cap: usize,
) -> Result<f64, StateError> {
    if j_cap < load {
        return Err(StateError::InvalidBound(format!(
            "truncation {j_cap} is below the starting load {load}"
        )));
    }
    if t == 0.0 {
        return Ok(load as f64 + 1.0);
    }
    let p = expm(&(truncated_generator(baseline, j_cap) * t));
    Ok((0..=j_cap).map(|j| (j as f64 + 1.0) * p[(load, j)]).sum())
}

/// Certificate that `E⁰ᵢ(W(t)+1) ≤ (i+1) e^{wt}` for every `i ≤ i_max` and
/// every `t` in `times`; value is the largest ratio.
pub fn check_semigroup_moment(
    baseline: &BaselineGenerator,
    i_max: usize,
    times: &[f64],
    j_cap: usize,
) -> CheckRow {
    let mut worst = Worst::new();
    let i_max = i_max.min(j_cap);
    for &t in times {
        let p = expm(&(truncated_generator(baseline, j_cap) * t));
        for i in 0..=i_max {
            let lhs: f64 = (0..=j_cap).map(|j| (j as f64 + 1.0) * p[(i, j)]).sum();
            worst.record(lhs, (i as f64 + 1.0) * (baseline.w() * t).exp(), 0.0);
        }
    }
    worst.row("semigroup_moment_growth")
}

/// Certificate that `‖P(t)ᵀx‖₁₁ ≤ e^{wt}‖x‖₁₁` for each density in `xs` and
/// each `t` in `times`, on the truncation `0..=j_cap`.
pub fn check_semigroup_l11(
    baseline: &BaselineGenerator,
    xs: &[Vec<f64>],
    times: &[f64],
    j_cap: usize,
) -> CheckRow {
    let mut worst = Worst::new();
    for &t in times {
        let p = expm(&(truncated_generator(baseline, j_cap) * t));
        for x in xs {
            let lhs: f64 = (0..=j_cap)
                .map(|j| {
                    let y: f64 = x.iter().take(j_cap + 1).enumerate().map(|(i, v)| v * p[(i, j)]).sum();
                    (j as f64 + 1.0) * y.abs()
                })
                .sum();
            let rhs = (baseline.w() * t).exp() * x.l11_norm();
            worst.record(lhs, rhs, 1e-12 * rhs);
        }
    }
    worst.row("semigroup_l11_bound")
}

/// Checks the three square-root mass inequalities on `count` random
/// admissible triples `(u, M, N)`: `M` uniform on `[1, 20]`, `N` log-uniform
/// on `[9, 10⁶]`, `u` on up to 40 loads rescaled to `‖u‖₁₁ ≤ M`, with some
/// entries pushed below `1/N`.
pub fn lemma_a1_battery(count: usize, seed: u64) -> CheckRow {
    let mut rng = rng_from_seed(seed);
    let mut worst = Worst::new();
    for _ in 0..count {
        let m = rng.random_range(1.0..20.0);
        let n = (rng.random_range(9f64.ln()..1e6f64.ln())).exp().floor() as u64;
        let len = rng.random_range(1..=40);
        let mut u: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random_bool(0.3) {
                    rng.random::<f64>() / n as f64
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let mass = u.l11_norm();
        if mass > 0.0 {
            let target = m * rng.random::<f64>();
            let scale = (target / mass).min(1.0);
            u.iter_mut().for_each(|v| *v *= scale);
        }
        let bound = crate::state::BoundM::new(m, n.max(9)).expect("admissible by construction");
        let sides = crate::state::lemma_a1_sides(&u, bound).expect("admissible by construction");
        for s in sides {
            worst.record(s.lhs, s.rhs, 0.0);
        }
    }
    worst.row("sqrt_mass_inequalities")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{self, luchsinger_nonlinear};
    use crate::rates::baseline::{BaselineRates, LoadDecay};
    use approx::assert_abs_diff_eq;
    use serde_json::json;
    use std::sync::Arc;

    #[derive(Debug)]
    struct Quadratic;
    impl BaselineRates for Quadratic {
        fn moves(&self, _load: usize, out: &mut Vec<(usize, f64)>) {
            out.clear();
        }
        fn death(&self, load: usize) -> f64 {
            (load * load) as f64
        }
    }

    #[test]
    fn pure_death_passes_growth() {
        let m = models::luchsinger_nonlinear(&json!({
            "lambda": 1.0, "mu": 1.0, "kappa": 1.0,
            "offspring": {"family": "poisson", "mean": 0.8}
        }))
        .unwrap();
        assert!(check_growth(m.baseline(), 1000).passed());
    }

    #[test]
    fn semigroup_l11_bound_for_decay() {
        let m = luchsinger_nonlinear(&json!({
            "lambda": 1.0, "mu": 1.0, "kappa": 1.0,
            "offspring": {"family": "poisson", "mean": 0.8}
        }))
        .unwrap();
        let xs = vec![vec![0.0, 0.0, 1.0], vec![0.5, 0.25, 0.25]];
        let row = check_semigroup_l11(m.baseline(), &xs, &[0.1, 1.0], 30);
        assert!(row.passed && row.value <= 1.0, "{row:?}");
        assert_eq!(row.samples, 4);
    }

    #[test]
    fn sqrt_mass_battery_passes() {
        let row = lemma_a1_battery(300, 5);
        assert!(row.passed, "{row:?}");
        assert_eq!(row.samples, 900);
    }

    #[test]
    fn quadratic_death_breaks_linear_growth() {
        let b = BaselineGenerator::new(Arc::new(Quadratic), 3.0, 1.0, 0.0).unwrap();
        let r = check_growth(&b, 100);
        // i² > 3(i+1) first at i = 4
        assert_eq!(r.first_violation.unwrap().load, 4);
        assert!(check_growth(&BaselineGenerator::null(), 50).passed());
    }

    #[test]
    fn identical_arguments_have_zero_differences() {
        let m = luchsinger_nonlinear(&json!({
            "lambda": 1.0, "mu": 1.0, "kappa": 1.0,
            "offspring": {"family": "poisson", "mean": 0.8}
        }))
        .unwrap();
        let x = [0.3, 0.2, 0.5];
        let mut s = (Vec::new(), Vec::new());
        let (lhs, _) = alpha_l1_difference(m.interaction(), 0, &x, &x, 50, &mut s);
        assert_eq!(lhs, 0.0);
    }

    #[test]
    fn luchsinger_envelopes_certify() {
        for theta in [0.5, 0.8, 2.0] {
            let m = luchsinger_nonlinear(&json!({
                "lambda": 1.3, "mu": 1.0, "kappa": 1.0,
                "offspring": {"family": "poisson", "mean": theta}
            }))
            .unwrap();
            let rows = check_lipschitz_sampled(&m, &LipschitzSampler::default());
            for r in &rows {
                assert!(r.passed, "{theta}: {r:?}");
                assert!(r.value <= 1.0 + 1e-9, "{r:?}");
            }
            assert_eq!(rows.iter().find(|r| r.condition == "alpha_host_lipschitz").unwrap().samples, 200);
        }
    }

    #[test]
    fn constant_rates_have_zero_lipschitz_ratios() {
        let m = models::constant_rates(&json!({"alpha_up": 0.4, "immigration": 0.5, "delta": 0.2}))
            .unwrap();
        let rows = check_lipschitz_sampled(&m, &LipschitzSampler::default());
        for r in rows.iter().filter(|r| r.condition.ends_with("lipschitz")) {
            assert_eq!(r.value, 0.0, "{r:?}");
        }
        assert!(rows.iter().all(|r| r.passed));
    }

    #[test]
    fn halved_envelope_is_detected() {
        let m = luchsinger_nonlinear(&json!({
            "lambda": 1.0, "mu": 1.0, "kappa": 1.0,
            "offspring": {"family": "point_mass", "at": 1}
        }))
        .unwrap();
        let mut env = m.envelopes();
        env.a01 = env.a01.scaled(0.5);
        let bad = m.with_envelopes(env);
        let rows = check_lipschitz_sampled(&bad, &LipschitzSampler::default());
        let host = rows.iter().find(|r| r.condition == "alpha_host_lipschitz").unwrap();
        assert!(!host.passed);
    }

    #[test]
    fn semigroup_moment_closed_forms() {
        let b = BaselineGenerator::new(Arc::new(LoadDecay::pure_death(1.0)), 1.0, 1.0, 0.0).unwrap();
        assert_eq!(semigroup_moment(&b, 3, 0.0, 10).unwrap(), 4.0);
        // from load 1: W(t) ∈ {0, 1}, value 1 + e^{-μt}
        assert_abs_diff_eq!(
            semigroup_moment(&b, 1, 0.7, 10).unwrap(),
            1.0 + (-0.7f64).exp(),
            epsilon = 1e-12
        );
        // from load i: E W(t) = i e^{-μt}
        assert_abs_diff_eq!(
            semigroup_moment(&b, 5, 1.3, 10).unwrap(),
            1.0 + 5.0 * (-1.3f64).exp(),
            epsilon = 1e-11
        );
        assert!(semigroup_moment(&b, 5, 1.0, 4).is_err());
        assert!(check_semigroup_moment(&b, 20, &[0.1, 1.0, 2.0], 60).passed);
    }

    #[test]
    fn tail_limsup_is_finite_for_load_decay() {
        let m = luchsinger_nonlinear(&json!({
            "lambda": 1.0, "mu": 1.0, "kappa": 0.5,
            "offspring": {"family": "point_mass", "at": 1}
        }))
        .unwrap();
        let row = check_tail_limsup(m.baseline(), 400, 10);
        assert!(row.passed);
        assert_eq!(row.value, 0.5);
    }
}
