//! Exact event-driven simulation of the interacting process.
//!
//! Random draws per event, in order: one uniform for the waiting time, one
//! uniform for the channel, then whatever the channel's target sampler
//! consumes.

use std::io::{self, Write};

use rand::Rng;
use serde::Serialize;

use crate::error::SimError;
use crate::ode::OdeSolution;
use crate::rates::events::{fill_channels, Channel, EventKind, Target};
use crate::rates::interaction::ModelSpec;
use crate::rng::{exp_time, rng_from_seed};
use crate::state::PopulationState;

/// Default cap on the number of events in one run.
pub const DEFAULT_EVENT_CAP: u64 = 10_000_000;

/// One jump: a host leaves `from` (if any) and a host enters `to` (if any).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Jump {
    pub time: f64,
    pub kind: EventKind,
    pub from: Option<usize>,
    pub to: Option<usize>,
}

/// A realized path: initial state plus the ordered jumps on `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    model: String,
    n: u64,
    horizon: f64,
    seed: u64,
    initial: PopulationState,
    jumps: Vec<Jump>,
    final_state: PopulationState,
}

fn apply_dense(counts: &mut Vec<u64>, jump: &Jump) {
    if let Some(f) = jump.from {
        counts[f] -= 1;
    }
    if let Some(t) = jump.to {
        if t >= counts.len() {
            counts.resize(t + 1, 0);
        }
        counts[t] += 1;
    }
}

impl PathRecord {
    pub(crate) fn new(
        model: &str,
        n: u64,
        horizon: f64,
        seed: u64,
        initial: PopulationState,
        jumps: Vec<Jump>,
    ) -> Self {
        let mut counts = initial.to_dense();
        for j in &jumps {
            apply_dense(&mut counts, j);
        }
        Self {
            model: model.to_string(),
            n,
            horizon,
            seed,
            initial,
            jumps,
            final_state: PopulationState::from_dense(&counts),
        }
    }

    pub fn model_name(&self) -> &str {
        &self.model
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn initial(&self) -> &PopulationState {
        &self.initial
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn final_state(&self) -> &PopulationState {
        &self.final_state
    }

    /// Replays the jumps from the initial state.
    pub fn replay(&self) -> PopulationState {
        let mut counts = self.initial.to_dense();
        for j in &self.jumps {
            apply_dense(&mut counts, j);
        }
        PopulationState::from_dense(&counts)
    }

    /// State just after the last jump at or before `t`.
    pub fn state_at(&self, t: f64) -> Result<PopulationState, SimError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(SimError::InvalidInput(format!(
                "t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        let mut counts = self.initial.to_dense();
        for j in self.jumps.iter().take_while(|j| j.time <= t) {
            apply_dense(&mut counts, j);
        }
        Ok(PopulationState::from_dense(&counts))
    }

    /// Dense counts at each of the nondecreasing `times`, in one pass.
    pub fn counts_at(&self, times: &[f64]) -> Vec<Vec<u64>> {
        let mut counts = self.initial.to_dense();
        let mut out = Vec::with_capacity(times.len());
        let mut next = 0;
        for &t in times {
            while next < self.jumps.len() && self.jumps[next].time <= t {
                apply_dense(&mut counts, &self.jumps[next]);
                next += 1;
            }
            out.push(counts.clone());
        }
        out
    }

    /// Number of jumps in `(t, t + h]`.
    pub fn window_transition_count(&self, t: f64, h: f64) -> Result<usize, SimError> {
        if t < 0.0 || h < 0.0 || t + h > self.horizon * (1.0 + 1e-12) {
            return Err(SimError::InvalidInput(format!(
                "window ({t}, {}] outside [0, {}]",
                t + h,
                self.horizon
            )));
        }
        let lo = self.jumps.partition_point(|j| j.time <= t);
        let hi = self.jumps.partition_point(|j| j.time <= t + h);
        Ok(hi - lo)
    }

    /// CSV with columns `jump_index,time,event_kind,load_from,load_to_or_blank`
    /// after a `#` header line.
    pub fn write_csv<W: Write>(&self, w: &mut W, header: &str) -> io::Result<()> {
        writeln!(
            w,
            "# {header} model={} N={} T={} seed={}",
            self.model, self.n, self.horizon, self.seed
        )?;
        writeln!(w, "jump_index,time,event_kind,load_from,load_to_or_blank")?;
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        for (k, j) in self.jumps.iter().enumerate() {
            writeln!(
                w,
                "{k},{},{},{},{}",
                j.time,
                j.kind.as_str(),
                opt(j.from),
                opt(j.to)
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub event_cap: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

/// Mutable population with dense counts and the matching density.
#[derive(Clone, Debug)]
pub(crate) struct DenseState {
    pub counts: Vec<u64>,
    pub x: Vec<f64>,
    inv_n: f64,
}

impl DenseState {
    pub fn new(state: &PopulationState, n: u64) -> Self {
        let counts = state.to_dense();
        let inv_n = 1.0 / n as f64;
        let x = counts.iter().map(|&c| c as f64 * inv_n).collect();
        Self { counts, x, inv_n }
    }

    pub fn remove(&mut self, load: usize) {
        self.counts[load] -= 1;
        self.x[load] = self.counts[load] as f64 * self.inv_n;
    }

    pub fn add(&mut self, load: usize) {
        if load >= self.counts.len() {
            self.counts.resize(load + 1, 0);
            self.x.resize(load + 1, 0.0);
        }
        self.counts[load] += 1;
        self.x[load] = self.counts[load] as f64 * self.inv_n;
    }
}

pub(crate) fn pick_channel(channels: &[Channel], total: f64, u: f64) -> &Channel {
    let target = u * total;
    let mut acc = 0.0;
    for c in channels {
        acc += c.rate;
        if target < acc {
            return c;
        }
    }
    channels.last().expect("nonempty channel list")
}

/// Simulates the interacting process on `[0, T]` with the default event cap.
pub fn simulate(
    model: &ModelSpec,
    initial: &PopulationState,
    n: u64,
    horizon: f64,
    seed: u64,
) -> Result<PathRecord, SimError> {
    simulate_with(model, initial, n, horizon, seed, &SimOptions::default())
}

pub fn simulate_with(
    model: &ModelSpec,
    initial: &PopulationState,
    n: u64,
    horizon: f64,
    seed: u64,
    options: &SimOptions,
) -> Result<PathRecord, SimError> {
    if n == 0 {
        return Err(SimError::InvalidInput("N must be >= 1".into()));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(SimError::InvalidInput(format!("bad horizon {horizon}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut state = DenseState::new(initial, n);
    let mut channels = Vec::new();
    let mut scratch = Vec::new();
    let mut jumps = Vec::new();
    let inter = model.interaction();
    let mut t = 0.0;
    loop {
        fill_channels(model, &state.counts, &state.x, n, &mut channels, &mut scratch)?;
        let total: f64 = channels.iter().map(|c| c.rate).sum();
        if total <= 0.0 {
            break;
        }
        t += exp_time(&mut rng, total);
        if t > horizon {
            break;
        }
        if jumps.len() as u64 >= options.event_cap {
            return Err(SimError::CapExceeded {
                cap: options.event_cap,
                time: t,
                partial: Box::new(PathRecord::new(
                    model.name(),
                    n,
                    horizon,
                    seed,
                    initial.clone(),
                    jumps,
                )),
            });
        }
        let ch = *pick_channel(&channels, total, rng.random::<f64>());
        let to = match ch.target {
            Target::Load(j) => Some(j),
            Target::SampleAlpha => Some(inter.alpha_sample(ch.load.expect("individual"), &state.x, &mut rng)),
            Target::SampleBeta => Some(inter.beta_sample(&state.x, &mut rng)),
            Target::Death => None,
        };
        if let Some(f) = ch.load {
            state.remove(f);
        }
        if let Some(l) = to {
            state.add(l);
        }
        jumps.push(Jump {
            time: t,
            kind: ch.kind,
            from: ch.load,
            to,
        });
    }
    Ok(PathRecord::new(model.name(), n, horizon, seed, initial.clone(), jumps))
}

/// Estimate of `sup_{t ≤ T} ‖N⁻¹X(t) − x(t)‖₁` for one path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupError {
    /// Largest distance over the evaluation points.
    pub sup: f64,
    /// Bound on the additional motion of `x` between evaluation points.
    pub slack: f64,
    pub argmax: f64,
    pub evaluations: usize,
}

fn density_distance(counts: &[u64], inv_n: f64, x: &[f64]) -> f64 {
    let len = counts.len().max(x.len());
    (0..len)
        .map(|i| {
            let a = counts.get(i).map_or(0.0, |&c| c as f64 * inv_n);
            let b = x.get(i).copied().unwrap_or(0.0);
            (a - b).abs()
        })
        .sum()
}

/// Evaluates the distance at both one-sided limits of every jump and on a
/// uniform grid of `grid` subintervals of `[0, T]`.
pub fn sup_l1_error_with(
    path: &PathRecord,
    ode: &OdeSolution,
    n: u64,
    grid: usize,
) -> Result<SupError, SimError> {
    let horizon = path.horizon();
    if (ode.end_time() - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(SimError::InvalidInput(format!(
            "path horizon {horizon} differs from ODE span {}",
            ode.end_time()
        )));
    }
    if n == 0 {
        return Err(SimError::InvalidInput("N must be >= 1".into()));
    }
    let inv_n = 1.0 / n as f64;
    let grid = grid.max(1);
    let mut counts = path.initial().to_dense();
    let mut x = Vec::new();
    let mut best = SupError {
        sup: 0.0,
        slack: 0.0,
        argmax: 0.0,
        evaluations: 0,
    };
    let mut prev_t = 0.0;
    let mut eval = |t: f64, counts: &[u64], best: &mut SupError, prev_t: &mut f64| {
        ode.eval_into(t, &mut x);
        let d = density_distance(counts, inv_n, &x);
        best.evaluations += 1;
        if d > best.sup {
            best.sup = d;
            best.argmax = t;
        }
        if t > *prev_t {
            best.slack = best.slack.max((t - *prev_t) * ode.speed_bound(*prev_t, t));
            *prev_t = t;
        }
    };
    let mut jumps = path.jumps().iter().peekable();
    for k in 0..=grid {
        let g = horizon * k as f64 / grid as f64;
        while let Some(j) = jumps.next_if(|j| j.time <= g) {
            eval(j.time, &counts, &mut best, &mut prev_t);
            apply_dense(&mut counts, j);
            eval(j.time, &counts, &mut best, &mut prev_t);
        }
        eval(g, &counts, &mut best, &mut prev_t);
    }
    Ok(best)
}

/// [`sup_l1_error_with`] on a 200-interval grid.
pub fn sup_l1_error(path: &PathRecord, ode: &OdeSolution, n: u64) -> Result<SupError, SimError> {
    sup_l1_error_with(path, ode, n, 200)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{luchsinger_nonlinear, null_model, pure_death};
    use crate::ode::{integrate, OdeSettings};
    use crate::state::{DensityVector, Norms};
    use serde_json::json;

    fn nonlinear() -> ModelSpec {
        luchsinger_nonlinear(&json!({
            "lambda": 1.0, "mu": 1.0, "kappa": 1.0,
            "offspring": {"family": "poisson", "mean": 0.8}
        }))
        .unwrap()
    }

    #[test]
    fn absorbing_state_has_no_jumps() {
        let m = null_model(&json!(null)).unwrap();
        let s = PopulationState::from_pairs([(0, 3), (2, 1)]);
        let p = simulate(&m, &s, 4, 5.0, 1).unwrap();
        assert!(p.jumps().is_empty());
        assert_eq!(p.final_state(), &s);
    }

    #[test]
    fn paths_are_deterministic_and_replayable() {
        let m = nonlinear();
        let s = PopulationState::from_pairs([(0, 45), (1, 5)]);
        let a = simulate(&m, &s, 50, 2.0, 77).unwrap();
        let b = simulate(&m, &s, 50, 2.0, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a.replay(), a.final_state());
        assert!(a.jumps().windows(2).all(|w| w[0].time < w[1].time));
        assert!(a.jumps().iter().all(|j| j.time <= 2.0));
        // fixed population
        assert_eq!(a.final_state().total_hosts(), 50);
    }

    #[test]
    fn state_at_is_piecewise_constant() {
        let m = pure_death(&json!({"mu": 1.0})).unwrap();
        let s = PopulationState::from_pairs([(3, 2)]);
        let p = simulate(&m, &s, 2, 10.0, 5).unwrap();
        assert_eq!(p.state_at(0.0).unwrap(), s);
        assert_eq!(&p.state_at(10.0).unwrap(), p.final_state());
        let j = p.jumps();
        let mid = 0.5 * (j[0].time + j[1].time);
        let mut expect = PopulationState::from_pairs([(3, 1), (2, 1)]);
        assert_eq!(p.state_at(mid).unwrap(), expect);
        expect = p.state_at(j[0].time).unwrap();
        assert_eq!(p.state_at(mid).unwrap(), expect);
        assert!(p.state_at(11.0).is_err());
    }

    #[test]
    fn windows_partition_the_jumps() {
        let m = nonlinear();
        let s = PopulationState::from_pairs([(0, 30), (2, 10)]);
        let p = simulate(&m, &s, 40, 2.0, 3).unwrap();
        assert_eq!(p.window_transition_count(0.5, 0.0).unwrap(), 0);
        assert_eq!(p.window_transition_count(0.0, 2.0).unwrap(), p.jumps().len());
        let parts: usize = (0..4)
            .map(|k| p.window_transition_count(0.5 * k as f64, 0.5).unwrap())
            .sum();
        assert_eq!(parts, p.jumps().len());
        assert!(p.window_transition_count(1.9, 0.5).is_err());
    }

    #[test]
    fn cap_exceeded_returns_partial_path() {
        let m = nonlinear();
        let s = PopulationState::from_pairs([(0, 30), (2, 10)]);
        let opts = SimOptions { event_cap: 5 };
        match simulate_with(&m, &s, 40, 2.0, 3, &opts) {
            Err(SimError::CapExceeded { partial, .. }) => assert_eq!(partial.jumps().len(), 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sup_error_for_constant_paths() {
        let m = null_model(&json!(null)).unwrap();
        let s = PopulationState::from_pairs([(0, 3), (1, 1)]);
        let x0 = s.scale(4).unwrap();
        let ode = integrate(&m, &x0, 1.0, &OdeSettings::default()).unwrap();
        let p = simulate(&m, &s, 4, 1.0, 0).unwrap();
        let e = sup_l1_error(&p, &ode, 4).unwrap();
        assert_eq!(e.sup, 0.0);
        assert_eq!(e.slack, 0.0);
    }

    #[test]
    fn zero_jump_path_against_moving_ode() {
        // a path with no hosts never jumps while the ODE from a unit mass decays
        let m = pure_death(&json!({"mu": 1.0})).unwrap();
        let ode = integrate(&m, &DensityVector::unit_mass(1), 1.0, &OdeSettings::default()).unwrap();
        let s = PopulationState::from_pairs([(1, 1)]);
        let empty_path = PathRecord::new("pure_death", 1, 1.0, 0, s.clone(), Vec::new());
        let e = sup_l1_error(&empty_path, &ode, 1).unwrap();
        // ‖e(1) − x(1)‖₁ = 2(1 − e^{-1})
        assert!((e.sup - 2.0 * (1.0 - (-1f64).exp())).abs() < 1e-6, "{e:?}");
        assert!(e.slack > 0.0);
    }

    #[test]
    fn refined_grid_agrees_within_slack() {
        let m = nonlinear();
        let s = PopulationState::from_pairs([(0, 18), (1, 2)]);
        let x0 = s.scale(20).unwrap();
        let ode = integrate(&m, &x0, 2.0, &OdeSettings::default()).unwrap();
        let p = simulate(&m, &s, 20, 2.0, 11).unwrap();
        let coarse = sup_l1_error_with(&p, &ode, 20, 50).unwrap();
        let fine = sup_l1_error_with(&p, &ode, 20, 500).unwrap();
        assert!(fine.sup >= coarse.sup - 1e-12);
        assert!(fine.sup - coarse.sup <= coarse.slack + 1e-12, "{coarse:?} {fine:?}");
        assert!(x0.l1_norm() > 0.0);
    }
}
