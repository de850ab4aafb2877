//! The independent-sum process: hosts evolve independently under rates with
//! the interaction frozen along the deterministic trajectory, plus
//! time-inhomogeneous Poisson immigration.
//!
//! All time-varying rates are realized by thinning against constants derived
//! from the declared envelopes and `G_T`. An actual rate above its dominator
//! is a hard error.
//!
//! Seeds: initial host `k` (in load order) uses `derive_seed(seed, 1, k)`,
//! the immigration arrival stream `derive_seed(seed, 2, 0)` and immigrant `m`
//! `derive_seed(seed, 3, m)`. Simultaneous jumps of different hosts are
//! ordered by host index.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::SimError;
use crate::ode::OdeSolution;
use crate::rates::constants::{bound_constants, moment_bound};
use crate::rates::events::EventKind;
use crate::rates::interaction::ModelSpec;
use crate::rng::{derive_seed, exp_time, rng_from_seed, SimRng};
use crate::ssa::{Jump, PathRecord};
use crate::state::{Norms, PopulationState};
use crate::stats::{grid_times, Running, Summary};

/// Relative tolerance before an actual rate counts as exceeding its dominator.
const DOMINATOR_TOL: f64 = 1e-9;

pub(crate) fn check_dominated(
    context: &'static str,
    actual: f64,
    dominator: f64,
    time: f64,
) -> Result<(), SimError> {
    if actual > dominator * (1.0 + DOMINATOR_TOL) + 1e-300 || !actual.is_finite() {
        Err(SimError::DominatorViolation {
            context,
            actual,
            dominator,
            time,
        })
    } else {
        Ok(())
    }
}

/// Rates along the deterministic trajectory with their dominating constants.
#[derive(Clone, Copy, Debug)]
pub struct TildeRates<'a> {
    model: &'a ModelSpec,
    ode: &'a OdeSolution,
    n: u64,
    alpha_dom: f64,
    beta_dom: f64,
    delta_dom: f64,
}

impl<'a> TildeRates<'a> {
    pub fn new(model: &'a ModelSpec, ode: &'a OdeSolution, n: u64) -> Result<Self, SimError> {
        if let Some(t) = ode.blow_up() {
            return Err(SimError::InvalidInput(format!(
                "trajectory blew up at t = {t}; rates are undefined beyond it"
            )));
        }
        if n == 0 {
            return Err(SimError::InvalidInput("N must be >= 1".into()));
        }
        // clipping and interpolation can push ‖x₊‖₁ marginally above G_T
        let g = ode.g_t() * (1.0 + 1e-6) + 1e-9;
        let e = model.envelopes();
        Ok(Self {
            model,
            ode,
            n,
            alpha_dom: e.alpha_rate_bound(g),
            beta_dom: n as f64 * e.beta_rate_bound(g),
            delta_dom: e.delta_rate_bound(g),
        })
    }

    pub fn model(&self) -> &'a ModelSpec {
        self.model
    }

    pub fn ode(&self) -> &'a OdeSolution {
        self.ode
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Dominator of `Σ_l α̃_il(t)`, uniform in `i` and `t`.
    pub fn alpha_dominator(&self) -> f64 {
        self.alpha_dom
    }

    /// Dominator of the total immigration rate `N Σ_i β̃_i(t)`.
    pub fn immigration_dominator(&self) -> f64 {
        self.beta_dom
    }

    /// Dominator of `δ̃_i(t)`, uniform in `i` and `t`.
    pub fn delta_dominator(&self) -> f64 {
        self.delta_dom
    }

    pub fn alpha_total(&self, load: usize, t: f64, buf: &mut Vec<f64>) -> f64 {
        self.ode.eval_into(t, buf);
        self.model.interaction().alpha_total(load, buf)
    }

    pub fn immigration_total(&self, t: f64, buf: &mut Vec<f64>) -> f64 {
        self.ode.eval_into(t, buf);
        self.n as f64 * self.model.interaction().beta_total(buf)
    }

    pub fn delta(&self, load: usize, t: f64, buf: &mut Vec<f64>) -> f64 {
        self.ode.eval_into(t, buf);
        self.model.interaction().delta(load, buf)
    }
}

/// One host's trajectory: start, then jumps; a jump to `None` is death.
#[derive(Clone, Debug, PartialEq)]
pub struct IndividualPath {
    pub start_load: usize,
    pub start_time: f64,
    pub jumps: Vec<Jump>,
}

impl IndividualPath {
    /// Load at `t`, or `None` before the start or after death.
    pub fn load_at(&self, t: f64) -> Option<usize> {
        if t < self.start_time {
            return None;
        }
        let k = self.jumps.partition_point(|j| j.time <= t);
        if k == 0 {
            Some(self.start_load)
        } else {
            self.jumps[k - 1].to
        }
    }

    pub fn is_dead(&self) -> bool {
        self.jumps.last().is_some_and(|j| j.to.is_none())
    }
}

struct Scratch {
    x: Vec<f64>,
    moves: Vec<(usize, f64)>,
}

impl Scratch {
    fn new() -> Self {
        Self {
            x: Vec::new(),
            moves: Vec::new(),
        }
    }
}

fn run_individual(
    rates: &TildeRates<'_>,
    start: usize,
    t0: f64,
    t_end: f64,
    rng: &mut SimRng,
    scratch: &mut Scratch,
    jumps: &mut Vec<Jump>,
) -> Result<(), SimError> {
    let baseline = rates.model.baseline();
    let inter = rates.model.interaction();
    let mut i = start;
    let mut t = t0;
    loop {
        let exit = baseline.exit_rate(i);
        let a_dom = if inter.alpha_active(i) { rates.alpha_dom } else { 0.0 };
        let d_dom = if inter.delta_active(i) { rates.delta_dom } else { 0.0 };
        let total = exit + a_dom + d_dom;
        if total <= 0.0 {
            return Ok(());
        }
        t += exp_time(rng, total);
        if t > t_end {
            return Ok(());
        }
        let mut u = rng.random::<f64>() * total;
        let death = baseline.death(i);
        let (kind, to) = if u < exit {
            if u < death {
                (EventKind::BaselineDeath, None)
            } else {
                u -= death;
                baseline.moves(i, &mut scratch.moves);
                let mut to = scratch.moves.last().map(|m| m.0);
                let mut acc = 0.0;
                for &(j, r) in &scratch.moves {
                    acc += r;
                    if u < acc {
                        to = Some(j);
                        break;
                    }
                }
                match to {
                    Some(j) => (EventKind::BaselineMove, Some(j)),
                    None => continue,
                }
            }
        } else if u < exit + a_dom {
            let a = rates.alpha_total(i, t, &mut scratch.x);
            check_dominated("individual interaction move", a, a_dom, t)?;
            if rng.random::<f64>() * a_dom >= a {
                continue;
            }
            (
                EventKind::InteractionMove,
                Some(inter.alpha_sample(i, &scratch.x, rng)),
            )
        } else {
            let d = rates.delta(i, t, &mut scratch.x);
            check_dominated("individual interaction death", d, d_dom, t)?;
            if rng.random::<f64>() * d_dom >= d {
                continue;
            }
            (EventKind::InteractionDeath, None)
        };
        jumps.push(Jump {
            time: t,
            kind,
            from: Some(i),
            to,
        });
        match to {
            Some(j) => i = j,
            None => return Ok(()),
        }
    }
}

/// Exact realization of one host from load `i0` at `t0` up to `t_end`.
pub fn simulate_individual(
    rates: &TildeRates<'_>,
    i0: usize,
    t0: f64,
    t_end: f64,
    seed: u64,
) -> Result<IndividualPath, SimError> {
    if !(t0 <= t_end) {
        return Err(SimError::InvalidInput(format!("start {t0} after end {t_end}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut jumps = Vec::new();
    run_individual(rates, i0, t0, t_end, &mut rng, &mut Scratch::new(), &mut jumps)?;
    Ok(IndividualPath {
        start_load: i0,
        start_time: t0,
        jumps,
    })
}

/// Superposition of independent hosts and immigrants, flattened to
/// aggregate counts.
pub fn simulate_tilde(
    model: &ModelSpec,
    initial: &PopulationState,
    n: u64,
    horizon: f64,
    ode: &OdeSolution,
    seed: u64,
) -> Result<PathRecord, SimError> {
    let rates = TildeRates::new(model, ode, n)?;
    if ode.end_time() < horizon * (1.0 - 1e-12) {
        return Err(SimError::InvalidInput(format!(
            "trajectory covers [0, {}] but T = {horizon}",
            ode.end_time()
        )));
    }
    let mut scratch = Scratch::new();
    let mut tagged: Vec<(u64, Jump)> = Vec::new();
    let mut buf = Vec::new();
    let mut k = 0u64;
    for (load, count) in initial.iter() {
        for _ in 0..count {
            let mut rng = rng_from_seed(derive_seed(seed, 1, k));
            buf.clear();
            run_individual(&rates, load, 0.0, horizon, &mut rng, &mut scratch, &mut buf)?;
            tagged.extend(buf.iter().map(|j| (k, *j)));
            k += 1;
        }
    }

    let b_dom = rates.immigration_dominator();
    if model.interaction().has_immigration() && b_dom > 0.0 {
        let mut arrivals = rng_from_seed(derive_seed(seed, 2, 0));
        let mut t = 0.0;
        let mut m = 0u64;
        loop {
            t += exp_time(&mut arrivals, b_dom);
            if t > horizon {
                break;
            }
            let b = rates.immigration_total(t, &mut scratch.x);
            check_dominated("immigration", b, b_dom, t)?;
            if arrivals.random::<f64>() * b_dom >= b {
                continue;
            }
            let mut rng = rng_from_seed(derive_seed(seed, 3, m));
            let load = model.interaction().beta_sample(&scratch.x, &mut rng);
            let idx = k + m;
            m += 1;
            tagged.push((
                idx,
                Jump {
                    time: t,
                    kind: EventKind::Immigration,
                    from: None,
                    to: Some(load),
                },
            ));
            buf.clear();
            run_individual(&rates, load, t, horizon, &mut rng, &mut scratch, &mut buf)?;
            tagged.extend(buf.iter().map(|j| (idx, *j)));
        }
    }

    tagged.sort_by(|a, b| a.1.time.total_cmp(&b.1.time).then(a.0.cmp(&b.0)));
    let jumps = tagged.into_iter().map(|(_, j)| j).collect();
    Ok(PathRecord::new(model.name(), n, horizon, seed, initial.clone(), jumps))
}

/// Replica `r` of an ensemble uses `derive_seed(master, 0, r)`.
pub fn replica_seed(master: u64, replica: u64) -> u64 {
    derive_seed(master, 0, replica)
}

/// Dense counts at `times` for each of `replicas` independent runs, in
/// replica order regardless of scheduling.
pub fn tilde_ensemble(
    model: &ModelSpec,
    initial: &PopulationState,
    n: u64,
    horizon: f64,
    ode: &OdeSolution,
    replicas: usize,
    seed: u64,
    times: &[f64],
) -> Result<Vec<Vec<Vec<u64>>>, SimError> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let p = simulate_tilde(model, initial, n, horizon, ode, replica_seed(seed, r as u64))?;
            Ok(p.counts_at(times))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub time: f64,
    /// Mean of `N⁻¹ Σ_l (l+1) X̃ˡ(t)`.
    pub mean: f64,
    pub se: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub bound: f64,
    pub rows: Vec<MomentRow>,
    /// Largest mean over grid times `t > 0`.
    pub sup_mean: f64,
    pub margin: f64,
    pub passed: bool,
}

/// Empirical first-moment growth of the independent-sum process against
/// `{N⁻¹‖X(0)‖₁₁ + T(b10 + b̃11(0) M_T)} e^{(w + a0* + a1* M_T) T}`.
///
/// At `t = 0` the mean equals `N⁻¹‖X(0)‖₁₁` exactly, which can coincide with
/// the bound, so the margin is taken over grid times `t > 0`.
pub fn moment_bound_check(
    model: &ModelSpec,
    initial: &PopulationState,
    n: u64,
    horizon: f64,
    ode: &OdeSolution,
    replicas: usize,
    seed: u64,
) -> Result<MomentReport, SimError> {
    let times = grid_times(horizon, 20);
    let counts = tilde_ensemble(model, initial, n, horizon, ode, replicas, seed, &times)?;
    let x0_l11 = initial.scale(n)?.l11_norm();
    let bound = moment_bound(model, x0_l11, horizon, ode.m_t());
    let inv = 1.0 / n as f64;
    let mut rows = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let s: Running = counts
            .iter()
            .map(|rep| {
                rep[k]
                    .iter()
                    .enumerate()
                    .map(|(l, &c)| (l as f64 + 1.0) * c as f64)
                    .sum::<f64>()
                    * inv
            })
            .collect();
        rows.push(MomentRow {
            time: t,
            mean: s.mean(),
            se: s.std_error(),
            bound,
            margin: bound - s.mean(),
        });
    }
    let sup_mean = rows
        .iter()
        .filter(|r| r.time > 0.0)
        .map(|r| r.mean)
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = bound - sup_mean;
    Ok(MomentReport {
        bound,
        rows,
        sup_mean,
        margin,
        passed: margin > 0.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub time: f64,
    /// Mean of `‖X̃(t) − N x(t)‖₁`.
    pub mean_error: f64,
    pub se: f64,
    /// `3(M_T + 1) √(N log N)`.
    pub bound: f64,
    pub ratio: f64,
    /// Fraction of runs with error above `K (M_T+1) √N log^{3/2} N`.
    pub tail_frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub n: u64,
    pub k: f64,
    pub rows: Vec<ConcentrationRow>,
    pub max_ratio: f64,
    pub passed: bool,
}

fn l1_gap(counts: &[u64], n: f64, x: &[f64]) -> f64 {
    let len = counts.len().max(x.len());
    (0..len)
        .map(|i| {
            let c = counts.get(i).map_or(0.0, |&c| c as f64);
            (c - n * x.get(i).copied().unwrap_or(0.0)).abs()
        })
        .sum()
}

/// Fixed-time ℓ₁ concentration of the independent-sum process around `N x`.
pub fn concentration_check(
    model: &ModelSpec,
    initial: &PopulationState,
    n: u64,
    horizon: f64,
    ode: &OdeSolution,
    replicas: usize,
    seed: u64,
    k: f64,
) -> Result<ConcentrationReport, SimError> {
    if n < 9 {
        return Err(SimError::InvalidInput("concentration check needs N >= 9".into()));
    }
    let times = grid_times(horizon, 10);
    let counts = tilde_ensemble(model, initial, n, horizon, ode, replicas, seed, &times)?;
    let nf = n as f64;
    let m = ode.m_t() + 1.0;
    let bound = 3.0 * m * (nf * nf.ln()).sqrt();
    let tail = k * m * nf.sqrt() * nf.ln().powf(1.5);
    let mut rows = Vec::with_capacity(times.len());
    for (j, &t) in times.iter().enumerate() {
        let x = ode.eval(t);
        let errs: Vec<f64> = counts.iter().map(|rep| l1_gap(&rep[j], nf, &x)).collect();
        let s: Running = errs.iter().copied().collect();
        let over = errs.iter().filter(|e| **e > tail).count();
        rows.push(ConcentrationRow {
            time: t,
            mean_error: s.mean(),
            se: s.std_error(),
            bound,
            ratio: s.mean() / bound,
            tail_frequency: over as f64 / replicas.max(1) as f64,
        });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(ConcentrationReport {
        n,
        k,
        passed: rows.iter().all(|r| r.mean_error < r.bound),
        rows,
        max_ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanRow {
    pub time: f64,
    pub load: usize,
    /// Mean of `N⁻¹ X̃ʲ(t)` and its standard error.
    pub empirical: Summary,
    pub expected: f64,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanIdentityReport {
    pub rows: Vec<MeanRow>,
    pub passed: bool,
}

/// Per-load means of `N⁻¹X̃(t)` against `x(t)` within `k_se` standard errors.
///
/// Only loads with `N xʲ(t) R ≥ min_expected_count` are compared, so that the
/// normal approximation behind the standard-error test is meaningful.
pub fn mean_identity_check(
    model: &ModelSpec,
    initial: &PopulationState,
    n: u64,
    horizon: f64,
    ode: &OdeSolution,
    replicas: usize,
    seed: u64,
    times: &[f64],
    k_se: f64,
    min_expected_count: f64,
) -> Result<MeanIdentityReport, SimError> {
    let counts = tilde_ensemble(model, initial, n, horizon, ode, replicas, seed, times)?;
    let inv = 1.0 / n as f64;
    let mut rows = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let x = ode.eval(t);
        for (load, &xj) in x.iter().enumerate() {
            if (n as f64) * xj * (replicas as f64) < min_expected_count {
                continue;
            }
            let s: Running = counts
                .iter()
                .map(|rep| rep[k].get(load).map_or(0.0, |&c| c as f64 * inv))
                .collect();
            let empirical = s.summary();
            rows.push(MeanRow {
                time: t,
                load,
                within: empirical.within(xj, k_se),
                empirical,
                expected: xj,
            });
        }
    }
    Ok(MeanIdentityReport {
        passed: !rows.is_empty() && rows.iter().all(|r| r.within),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowReport {
    /// Window length `1 / (2⌈N M_T⌉^{m2} H_T)`.
    pub h: f64,
    /// `K √N log^{3/2} N + a log N`.
    pub count_threshold: f64,
    pub windows: usize,
    /// Windows whose start state lay within `K √N log^{3/2} N` of `N x`.
    pub conditioned: usize,
    pub exceed_frequency: f64,
    pub max_count: usize,
    pub passed: bool,
}

/// Transition counts over short windows of independent-sum paths.
pub fn window_check(
    model: &ModelSpec,
    paths: &[PathRecord],
    ode: &OdeSolution,
    n: u64,
    k: f64,
    a: f64,
    max_frequency: f64,
) -> Result<WindowReport, SimError> {
    let horizon = paths
        .first()
        .map(|p| p.horizon())
        .ok_or_else(|| SimError::InvalidInput("no paths".into()))?;
    let nf = n as f64;
    let c = bound_constants(model, ode.m_t(), ode.g_t(), n);
    let m2 = model.baseline().m2();
    let h = 1.0 / (2.0 * (nf * ode.m_t()).ceil().max(1.0).powf(m2) * c.h_t);
    let closeness = k * nf.sqrt() * nf.ln().powf(1.5);
    let threshold = closeness + a * nf.ln();
    let starts: Vec<f64> = (0..)
        .map(|j| j as f64 * h)
        .take_while(|t| t + h <= horizon)
        .collect();
    let xs: Vec<Vec<f64>> = starts.iter().map(|&t| ode.eval(t)).collect();
    let (mut windows, mut conditioned, mut exceed, mut max_count) = (0, 0, 0, 0);
    for p in paths {
        let counts = p.counts_at(&starts);
        for ((&t, x), cnt) in starts.iter().zip(&xs).zip(&counts) {
            windows += 1;
            if l1_gap(cnt, nf, x) > closeness {
                continue;
            }
            conditioned += 1;
            let m = p.window_transition_count(t, h)?;
            max_count = max_count.max(m);
            if m as f64 > threshold {
                exceed += 1;
            }
        }
    }
    let freq = if conditioned == 0 {
        0.0
    } else {
        exceed as f64 / conditioned as f64
    };
    Ok(WindowReport {
        h,
        count_threshold: threshold,
        windows,
        conditioned,
        exceed_frequency: freq,
        max_count,
        passed: freq <= max_frequency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{constant_rates, luchsinger_nonlinear, null_model, pure_death};
    use crate::ode::{integrate, OdeSettings};
    use crate::state::DensityVector;
    use serde_json::json;

    fn ode_for(model: &ModelSpec, x0: &DensityVector, t: f64) -> OdeSolution {
        integrate(model, x0, t, &OdeSettings::default()).unwrap()
    }

    #[test]
    fn zero_rates_keep_the_start() {
        let m = null_model(&json!(null)).unwrap();
        let ode = ode_for(&m, &DensityVector::unit_mass(2), 1.0);
        let rates = TildeRates::new(&m, &ode, 5).unwrap();
        let p = simulate_individual(&rates, 2, 0.0, 1.0, 9).unwrap();
        assert!(p.jumps.is_empty());
        assert_eq!(p.load_at(0.7), Some(2));
        let s = PopulationState::from_pairs([(0, 2), (2, 3)]);
        let path = simulate_tilde(&m, &s, 5, 1.0, &ode, 1).unwrap();
        assert!(path.jumps().is_empty());
    }

    #[test]
    fn pure_death_jump_frequency() {
        let m = pure_death(&json!({"mu": 1.0})).unwrap();
        let ode = ode_for(&m, &DensityVector::unit_mass(1), 1.0);
        let rates = TildeRates::new(&m, &ode, 1).unwrap();
        let reps = 10_000;
        let hits = (0..reps)
            .filter(|&s| !simulate_individual(&rates, 1, 0.0, 1.0, s).unwrap().jumps.is_empty())
            .count();
        let p = 1.0 - (-1f64).exp();
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((hits as f64 / reps as f64 - p).abs() <= 3.0 * se);
    }

    #[test]
    fn constant_killing_survival() {
        let m = constant_rates(&json!({"delta": 0.7})).unwrap();
        let ode = ode_for(&m, &DensityVector::unit_mass(0), 1.5);
        let rates = TildeRates::new(&m, &ode, 1).unwrap();
        let reps = 10_000;
        let alive = (0..reps)
            .filter(|&s| !simulate_individual(&rates, 0, 0.0, 1.5, s).unwrap().is_dead())
            .count();
        let p = (-0.7f64 * 1.5).exp();
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((alive as f64 / reps as f64 - p).abs() <= 3.0 * se);
    }

    #[test]
    fn constant_immigration_is_poisson() {
        let m = constant_rates(&json!({"immigration": 0.4, "immigration_load": 1})).unwrap();
        let ode = ode_for(&m, &DensityVector::unit_mass(0), 2.0);
        let s = PopulationState::from_pairs([(0, 10)]);
        let counts: Running = (0..1000)
            .map(|r| {
                let p = simulate_tilde(&m, &s, 10, 2.0, &ode, r).unwrap();
                p.jumps().len() as f64
            })
            .collect();
        // N c T = 8
        assert!((counts.mean() - 8.0).abs() <= 3.0 * counts.std_error(), "{counts:?}");
        assert!((counts.variance() - 8.0).abs() < 1.5);
    }

    #[test]
    fn ensemble_is_deterministic() {
        let m = luchsinger_nonlinear(&json!({
            "lambda": 1.0, "mu": 1.0, "kappa": 1.0,
            "offspring": {"family": "poisson", "mean": 0.8}
        }))
        .unwrap();
        let s = PopulationState::from_pairs([(0, 18), (1, 2)]);
        let ode = ode_for(&m, &s.scale(20).unwrap(), 1.0);
        let times = [0.5, 1.0];
        let a = tilde_ensemble(&m, &s, 20, 1.0, &ode, 16, 3, &times).unwrap();
        let b = tilde_ensemble(&m, &s, 20, 1.0, &ode, 16, 3, &times).unwrap();
        assert_eq!(a, b);
        let p = simulate_tilde(&m, &s, 20, 1.0, &ode, 5).unwrap();
        assert_eq!(p.final_state().total_hosts(), 20);
    }

    #[test]
    fn degenerate_model_has_zero_concentration_error() {
        let m = null_model(&json!(null)).unwrap();
        let s = PopulationState::from_pairs([(0, 7), (3, 3)]);
        let ode = ode_for(&m, &s.scale(10).unwrap(), 1.0);
        let r = concentration_check(&m, &s, 10, 1.0, &ode, 20, 0, 1.0).unwrap();
        assert!(r.passed);
        assert!(r.rows.iter().all(|row| row.mean_error < 1e-12));
    }

    #[test]
    fn death_only_moment_is_below_initial() {
        let m = pure_death(&json!({"mu": 1.0})).unwrap();
        let s = PopulationState::from_pairs([(2, 10)]);
        let ode = ode_for(&m, &s.scale(10).unwrap(), 1.0);
        let r = moment_bound_check(&m, &s, 10, 1.0, &ode, 50, 1).unwrap();
        assert!((r.bound - 3.0).abs() < 1e-12);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn blown_up_trajectory_is_rejected() {
        let m = constant_rates(&json!({"alpha_up": 5.0})).unwrap();
        let settings = OdeSettings {
            blow_up_cap: Some(5.0),
            truncation: Some(200),
            ..OdeSettings::default()
        };
        let partial = match integrate(&m, &DensityVector::unit_mass(0), 10.0, &settings) {
            Err(crate::error::OdeError::BlowUp { partial, .. }) => *partial,
            other => panic!("{other:?}"),
        };
        assert!(TildeRates::new(&m, &partial, 1).is_err());
    }
}
