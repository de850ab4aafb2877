//! Joint construction of the interacting process `X` and the independent-sum
//! process `X̃` on one probability space.
//!
//! The state is `Z = (Z₁, Z₂, Z₃, Z₄)` with `X = Z₁ + Z₂` and `X̃ = Z₁ + Z₃`:
//! `Z₁` holds coupled pairs, `Z₂` and `Z₃` the decoupled members on each side
//! and `Z₄` counts decoupled individuals that no longer appear in `Z₂` or
//! `Z₃`. `V = Z₄ + ΣZ₃` is the number of decouplings so far.
//!
//! Interaction moves, immigration and interaction deaths of coupled pairs are
//! realized as two Poisson streams, one at the rates of the current density
//! `N⁻¹X` and one at the rates along the trajectory `x(t)`. A proposal
//! `(i → l)` from the first stream is matched with probability
//! `min(a, b)/a` and otherwise decouples the pair on the `X` side; a proposal
//! from the second stream is accepted with probability `(b − a)⁺/b` and
//! decouples on the `X̃` side. Here `a` and `b` are the pointwise rates of
//! that target under the two densities, so the split is exact without
//! enumerating targets. Time-varying rates are thinned against the same
//! dominators as the independent-sum process.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ModelError, SimError};
use crate::ode::OdeSolution;
use crate::rates::constants::bound_constants;
use crate::rates::events::EventKind;
use crate::rates::interaction::{alpha_l1_difference, beta_l1_difference, Interaction, ModelSpec};
use crate::rng::{exp_time, rng_from_seed, SimRng};
use crate::ssa::{Jump, PathRecord, DEFAULT_EVENT_CAP};
use crate::state::PopulationState;
use crate::stats::{Running, Summary};
use crate::tilde::{check_dominated, replica_seed, TildeRates};

/// The four components of the coupled state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CouplingState {
    pub z1: PopulationState,
    pub z2: PopulationState,
    pub z3: PopulationState,
    pub z4: u64,
}

impl CouplingState {
    /// `Z₁ = ξ₀`, everything else empty.
    pub fn initial(xi0: &PopulationState) -> Self {
        Self {
            z1: xi0.clone(),
            ..Self::default()
        }
    }

    /// `X = Z₁ + Z₂`.
    pub fn x(&self) -> PopulationState {
        let mut s = self.z1.clone();
        for (i, c) in self.z2.iter() {
            s.add(i, c);
        }
        s
    }

    /// `X̃ = Z₁ + Z₃`.
    pub fn tilde(&self) -> PopulationState {
        let mut s = self.z1.clone();
        for (i, c) in self.z3.iter() {
            s.add(i, c);
        }
        s
    }

    /// `V = Z₄ + Σ Z₃`.
    pub fn v(&self) -> u64 {
        self.z4 + self.z3.total_hosts()
    }
}

const Z1: usize = 0;
const Z2: usize = 1;
const Z3: usize = 2;

#[derive(Clone, Debug)]
struct Dense {
    z: [Vec<u64>; 3],
    z4: u64,
    sums: [u64; 3],
    /// `N⁻¹X`
    x: Vec<f64>,
    inv_n: f64,
}

impl Dense {
    fn new(xi0: &PopulationState, n: u64) -> Self {
        let z1 = xi0.to_dense();
        let len = z1.len();
        let inv_n = 1.0 / n as f64;
        let x = z1.iter().map(|&c| c as f64 * inv_n).collect();
        Self {
            sums: [z1.iter().sum(), 0, 0],
            z: [z1, vec![0; len], vec![0; len]],
            z4: 0,
            x,
            inv_n,
        }
    }

    fn v(&self) -> u64 {
        self.z4 + self.sums[Z3]
    }

    fn refresh_x(&mut self, i: usize) {
        self.x[i] = (self.z[Z1][i] + self.z[Z2][i]) as f64 * self.inv_n;
    }

    fn grow(&mut self, i: usize) {
        if i >= self.x.len() {
            for v in &mut self.z {
                v.resize(i + 1, 0);
            }
            self.x.resize(i + 1, 0.0);
        }
    }

    fn dec(&mut self, comp: usize, i: usize) {
        self.z[comp][i] -= 1;
        self.sums[comp] -= 1;
        self.refresh_x(i);
    }

    fn inc(&mut self, comp: usize, i: usize) {
        self.grow(i);
        self.z[comp][i] += 1;
        self.sums[comp] += 1;
        self.refresh_x(i);
    }

    fn tilde_counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.z[Z1].iter().zip(&self.z[Z3]).map(|(a, b)| a + b)
    }

    fn x_gap(&self, xt: &[f64]) -> f64 {
        let len = self.x.len().max(xt.len());
        (0..len)
            .map(|i| (self.x.get(i).copied().unwrap_or(0.0) - xt.get(i).copied().unwrap_or(0.0)).abs())
            .sum()
    }

    fn tilde_gap(&self, xt: &[f64]) -> f64 {
        let mut s = 0.0;
        let mut len = 0;
        for (i, c) in self.tilde_counts().enumerate() {
            s += (c as f64 * self.inv_n - xt.get(i).copied().unwrap_or(0.0)).abs();
            len = i + 1;
        }
        s + xt.iter().skip(len).map(|v| v.abs()).sum::<f64>()
    }

    fn to_state(&self) -> CouplingState {
        CouplingState {
            z1: PopulationState::from_dense(&self.z[Z1]),
            z2: PopulationState::from_dense(&self.z[Z2]),
            z3: PopulationState::from_dense(&self.z[Z3]),
            z4: self.z4,
        }
    }

    /// Both pathwise inequalities, checked exactly in integers.
    fn check_invariants(&self, time: f64) -> Result<(), SimError> {
        let (s2, s3) = (self.sums[Z2], self.sums[Z3]);
        if s2 > self.z4 + s3 {
            return Err(SimError::InvariantBreach {
                time,
                detail: format!("Σ Z2 = {s2} > Z4 + Σ Z3 = {}", self.z4 + s3),
            });
        }
        let diff: u64 = self.z[Z2]
            .iter()
            .zip(&self.z[Z3])
            .map(|(a, b)| a.abs_diff(*b))
            .sum();
        if diff > s2 + s3 || s2 + s3 > 2 * self.v() {
            return Err(SimError::InvariantBreach {
                time,
                detail: format!(
                    "‖X − X̃‖₁ = {diff}, Σ(Z2 + Z3) = {}, 2V = {}",
                    s2 + s3,
                    2 * self.v()
                ),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
enum Stream {
    BaselineMove(usize),
    BaselineDeath,
    AlphaX,
    AlphaTilde,
    DeathX,
    DeathTilde,
    ImmigrationX,
    ImmigrationTilde,
}

#[derive(Clone, Copy, Debug)]
struct CChannel {
    comp: usize,
    load: usize,
    stream: Stream,
    rate: f64,
}

type Change = Option<(Option<usize>, Option<usize>)>;

#[derive(Clone, Copy, Debug)]
struct Outcome {
    kind: EventKind,
    dec: Option<(usize, usize)>,
    inc: [Option<(usize, usize)>; 2],
    z4: bool,
    x: Change,
    tilde: Change,
}

impl Outcome {
    fn new(kind: EventKind) -> Self {
        Self {
            kind,
            dec: None,
            inc: [None, None],
            z4: false,
            x: None,
            tilde: None,
        }
    }
}

/// Probability that a first-stream proposal with rates `a` (current density)
/// and `b` (trajectory) is matched.
fn matched_prob(a: f64, b: f64) -> f64 {
    if a <= 0.0 {
        1.0
    } else {
        a.min(b) / a
    }
}

fn surplus(a: f64, b: f64) -> f64 {
    if b > a {
        b - a
    } else {
        0.0
    }
}

fn check_rate(v: f64, time: f64, what: &str) -> Result<f64, SimError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(SimError::InvariantBreach {
            time,
            detail: format!("{what} rate {v} is negative or non-finite"),
        })
    }
}

/// `a_N` and the bound on the part omitted by truncating target sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Intensity {
    pub value: f64,
    pub slack: f64,
}

fn intensity_dense(
    inter: &dyn Interaction,
    z1: &[u64],
    x: &[f64],
    xt: &[f64],
    n: u64,
    cap: usize,
    scratch: &mut (Vec<f64>, Vec<f64>),
) -> Intensity {
    let mut out = Intensity::default();
    for (i, &c) in z1.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let c = c as f64;
        if inter.alpha_active(i) {
            let (p, s) = alpha_l1_difference(inter, i, x, xt, cap, scratch);
            out.value += c * p;
            out.slack += c * s;
        }
        if inter.delta_active(i) {
            out.value += c * (inter.delta(i, x) - inter.delta(i, xt)).abs();
        }
    }
    if inter.has_immigration() {
        let (p, s) = beta_l1_difference(inter, x, xt, cap, scratch);
        out.value += n as f64 * p;
        out.slack += n as f64 * s;
    }
    out
}

fn default_cap(ode: &OdeSolution) -> usize {
    ode.truncation().max(64)
}

/// Intensity of the decoupling counter `V` at state `Z` and time `t`:
/// `Σᵢ Z₁ⁱ Σₗ |Δα_il| + N Σᵢ |Δβᵢ| + Σᵢ Z₁ⁱ |Δδᵢ|`, differences taken between
/// `N⁻¹X` and `x(t)`. Target sums are truncated at the ODE truncation (at
/// least 64); `slack` bounds the remainder.
pub fn compensator_intensity(
    model: &ModelSpec,
    state: &CouplingState,
    t: f64,
    n: u64,
    ode: &OdeSolution,
) -> Result<Intensity, ModelError> {
    if n == 0 {
        return Err(ModelError::InvalidParameter("N must be >= 1".into()));
    }
    let x = state.x().scale(n).map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
    let xt = ode.eval(t);
    Ok(intensity_dense(
        model.interaction(),
        &state.z1.to_dense(),
        x.values(),
        &xt,
        n,
        default_cap(ode),
        &mut (Vec::new(), Vec::new()),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingOptions {
    pub event_cap: u64,
    /// Times at which `V(t∧τ)` and `∫₀^{t∧τ} a_N` are recorded.
    pub check_times: Vec<f64>,
    /// Integrate the compensator and test the intensity bound at events.
    pub track_compensator: bool,
    /// Truncation of target sums in the intensity; default from the ODE.
    pub compensator_cap: Option<usize>,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self {
            event_cap: DEFAULT_EVENT_CAP,
            check_times: Vec::new(),
            track_compensator: true,
            compensator_cap: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BalancePoint {
    pub time: f64,
    /// `V(t∧τ)`.
    pub v: u64,
    /// `∫₀^{t∧τ} a_N(s) ds`.
    pub compensator: f64,
    pub compensator_slack: f64,
}

/// The intensity inequality `N⁻¹a_N ≤ (H1 + H2) ‖N⁻¹X − x‖₁` at event times
/// before `τ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct IntensityBoundCheck {
    pub checked: u64,
    pub violations: u64,
    /// Largest `N⁻¹a_N / ((H1 + H2)‖N⁻¹X − x‖₁)` seen, with the slack added
    /// to `a_N`. Points with `X/N = x` exactly contribute only if `a_N > 0`.
    pub max_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub seed: u64,
    pub n: u64,
    pub horizon: f64,
    pub x_path: PathRecord,
    pub tilde_path: PathRecord,
    /// `(time, V)` after each increment of `V`.
    pub v_path: Vec<(f64, u64)>,
    pub tau: Option<f64>,
    pub final_state: CouplingState,
    pub sup_x_error: f64,
    pub sup_tilde_error: f64,
    pub balance: Vec<BalancePoint>,
    pub bound_check: IntensityBoundCheck,
    pub events: u64,
}

impl CoupledRun {
    pub fn v_final(&self) -> u64 {
        self.final_state.v()
    }

    /// `V(t)`, right-continuous.
    pub fn v_at(&self, t: f64) -> u64 {
        let k = self.v_path.partition_point(|p| p.0 <= t);
        if k == 0 {
            0
        } else {
            self.v_path[k - 1].1
        }
    }
}

struct Tracker<'a> {
    model: &'a ModelSpec,
    ode: &'a OdeSolution,
    n: u64,
    cap: usize,
    track: bool,
    h: f64,
    checks: Vec<f64>,
    next_check: usize,
    last: f64,
    cum: Intensity,
    tau: Option<f64>,
    at_tau: (u64, Intensity),
    sup_x: f64,
    sup_tilde: f64,
    balance: Vec<BalancePoint>,
    bound: IntensityBoundCheck,
    xt: Vec<f64>,
    scratch: (Vec<f64>, Vec<f64>),
}

impl Tracker<'_> {
    fn intensity_at(&mut self, z: &Dense, t: f64) -> Intensity {
        self.ode.eval_into(t, &mut self.xt);
        intensity_dense(
            self.model.interaction(),
            &z.z[Z1],
            &z.x,
            &self.xt,
            self.n,
            self.cap,
            &mut self.scratch,
        )
    }

    /// Sup bookkeeping and `τ` detection at `t`; returns true if `τ` is hit.
    fn observe(&mut self, z: &Dense, t: f64) -> bool {
        self.ode.eval_into(t, &mut self.xt);
        let gx = z.x_gap(&self.xt);
        let gt = z.tilde_gap(&self.xt);
        self.sup_x = self.sup_x.max(gx);
        self.sup_tilde = self.sup_tilde.max(gt);
        if self.tau.is_none() && gt >= 1.0 {
            self.tau = Some(t);
            self.at_tau = (z.v(), self.cum);
            return true;
        }
        false
    }

    fn record_check(&mut self, z: &Dense, t: f64) {
        let (v, c) = if self.tau.is_some() {
            self.at_tau
        } else {
            (z.v(), self.cum)
        };
        self.balance.push(BalancePoint {
            time: t,
            v,
            compensator: c.value,
            compensator_slack: c.slack,
        });
    }

    /// Moves from the last breakpoint to `t` with the state frozen:
    /// integrates `a_N` by Simpson's rule between ODE nodes and check times,
    /// observing at every breakpoint.
    fn advance(&mut self, z: &Dense, t: f64) {
        if t <= self.last {
            return;
        }
        let times = self.ode.times();
        let lo = times.partition_point(|&s| s <= self.last);
        let hi = times.partition_point(|&s| s < t);
        let mut points: Vec<f64> = times[lo..hi].to_vec();
        points.extend(
            self.checks[self.next_check..]
                .iter()
                .copied()
                .take_while(|&c| c <= t)
                .filter(|&c| c > self.last),
        );
        points.push(t);
        points.sort_by(f64::total_cmp);
        points.dedup();
        for q in points {
            let p = self.last;
            if self.track && self.tau.is_none() && q > p {
                let ia = self.intensity_at(z, p);
                let im = self.intensity_at(z, 0.5 * (p + q));
                let ib = self.intensity_at(z, q);
                let w = (q - p) / 6.0;
                self.cum.value += w * (ia.value + 4.0 * im.value + ib.value);
                self.cum.slack += w * (ia.slack + 4.0 * im.slack + ib.slack);
            }
            self.last = q;
            self.observe(z, q);
            while self.next_check < self.checks.len() && self.checks[self.next_check] <= q {
                let c = self.checks[self.next_check];
                self.record_check(z, c);
                self.next_check += 1;
            }
        }
    }

    /// Intensity bound at a post-event state strictly before `τ`.
    fn check_bound(&mut self, z: &Dense, t: f64) {
        if !self.track || self.tau.is_some() {
            return;
        }
        let a = self.intensity_at(z, t);
        let lhs = (a.value + a.slack) / self.n as f64;
        let rhs = self.h * z.x_gap(&self.xt);
        self.bound.checked += 1;
        if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
            self.bound.violations += 1;
        }
        if rhs > 0.0 {
            self.bound.max_ratio = self.bound.max_ratio.max(lhs / rhs);
        } else if lhs > 0.0 {
            self.bound.max_ratio = f64::INFINITY;
        }
    }
}

fn channels(
    model: &ModelSpec,
    rates: &TildeRates<'_>,
    z: &Dense,
    n: u64,
    skip_tilde_pairs: bool,
    out: &mut Vec<CChannel>,
    moves: &mut Vec<(usize, f64)>,
) -> Result<(), SimError> {
    out.clear();
    let baseline = model.baseline();
    let inter = model.interaction();
    let mut push = |comp, load, stream, rate: f64| {
        if rate > 0.0 {
            out.push(CChannel {
                comp,
                load,
                stream,
                rate,
            });
        }
    };
    for comp in [Z1, Z2, Z3] {
        for (i, &c) in z.z[comp].iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            baseline.moves(i, moves);
            for &(j, r) in moves.iter() {
                push(comp, i, Stream::BaselineMove(j), c * r);
            }
            push(comp, i, Stream::BaselineDeath, c * baseline.death(i));
            if inter.alpha_active(i) {
                if comp != Z3 {
                    let a = check_rate(inter.alpha_total(i, &z.x), 0.0, "interaction move")?;
                    push(comp, i, Stream::AlphaX, c * a);
                }
                if comp == Z3 || (comp == Z1 && !skip_tilde_pairs) {
                    push(comp, i, Stream::AlphaTilde, c * rates.alpha_dominator());
                }
            }
            if inter.delta_active(i) {
                if comp != Z3 {
                    let d = check_rate(inter.delta(i, &z.x), 0.0, "interaction death")?;
                    push(comp, i, Stream::DeathX, c * d);
                }
                if comp == Z3 || (comp == Z1 && !skip_tilde_pairs) {
                    push(comp, i, Stream::DeathTilde, c * rates.delta_dominator());
                }
            }
        }
    }
    if inter.has_immigration() {
        let b = check_rate(inter.beta_total(&z.x), 0.0, "immigration")?;
        push(Z1, 0, Stream::ImmigrationX, n as f64 * b);
        if !skip_tilde_pairs {
            push(Z1, 0, Stream::ImmigrationTilde, rates.immigration_dominator());
        }
    }
    Ok(())
}

/// Decides the effect of a proposal on channel `ch` at time `t`, or `None`
/// if it is thinned away.
fn resolve(
    model: &ModelSpec,
    rates: &TildeRates<'_>,
    z: &Dense,
    ch: &CChannel,
    t: f64,
    xt: &mut Vec<f64>,
    rng: &mut SimRng,
) -> Result<Option<Outcome>, SimError> {
    let inter = model.interaction();
    let (comp, i) = (ch.comp, ch.load);
    let both = |o: &mut Outcome, c: Change| match comp {
        Z1 => {
            o.x = c;
            o.tilde = c;
        }
        Z2 => o.x = c,
        _ => o.tilde = c,
    };
    let out = match ch.stream {
        Stream::BaselineMove(j) => {
            let mut o = Outcome::new(EventKind::BaselineMove);
            o.dec = Some((comp, i));
            o.inc[0] = Some((comp, j));
            both(&mut o, Some((Some(i), Some(j))));
            o
        }
        Stream::BaselineDeath => {
            let mut o = Outcome::new(EventKind::BaselineDeath);
            o.dec = Some((comp, i));
            o.z4 = comp == Z3;
            both(&mut o, Some((Some(i), None)));
            o
        }
        Stream::AlphaX => {
            let l = inter.alpha_sample(i, &z.x, rng);
            let mut o = Outcome::new(EventKind::InteractionMove);
            o.dec = Some((comp, i));
            if comp == Z2 {
                o.inc[0] = Some((Z2, l));
                o.x = Some((Some(i), Some(l)));
            } else {
                rates.ode().eval_into(t, xt);
                let a = check_rate(inter.alpha_pointwise(i, l, &z.x), t, "pointwise move")?;
                let b = check_rate(inter.alpha_pointwise(i, l, xt), t, "pointwise move")?;
                o.x = Some((Some(i), Some(l)));
                if rng.random::<f64>() < matched_prob(a, b) {
                    o.inc[0] = Some((Z1, l));
                    o.tilde = Some((Some(i), Some(l)));
                } else {
                    o.inc = [Some((Z2, l)), Some((Z3, i))];
                }
            }
            o
        }
        Stream::AlphaTilde => {
            let dom = rates.alpha_dominator();
            let total = rates.alpha_total(i, t, xt);
            check_dominated("coupled interaction move", total, dom, t)?;
            if rng.random::<f64>() * dom >= total {
                return Ok(None);
            }
            let l = inter.alpha_sample(i, xt, rng);
            let mut o = Outcome::new(EventKind::InteractionMove);
            o.dec = Some((comp, i));
            o.tilde = Some((Some(i), Some(l)));
            if comp == Z3 {
                o.inc[0] = Some((Z3, l));
            } else {
                let a = check_rate(inter.alpha_pointwise(i, l, &z.x), t, "pointwise move")?;
                let b = check_rate(inter.alpha_pointwise(i, l, xt), t, "pointwise move")?;
                if b <= 0.0 || rng.random::<f64>() * b >= surplus(a, b) {
                    return Ok(None);
                }
                o.inc = [Some((Z2, i)), Some((Z3, l))];
            }
            o
        }
        Stream::DeathX => {
            let mut o = Outcome::new(EventKind::InteractionDeath);
            o.dec = Some((comp, i));
            o.x = Some((Some(i), None));
            if comp == Z1 {
                rates.ode().eval_into(t, xt);
                let a = inter.delta(i, &z.x);
                let b = check_rate(inter.delta(i, xt), t, "interaction death")?;
                if rng.random::<f64>() < matched_prob(a, b) {
                    o.tilde = Some((Some(i), None));
                } else {
                    o.inc[0] = Some((Z3, i));
                }
            }
            o
        }
        Stream::DeathTilde => {
            let dom = rates.delta_dominator();
            let b = rates.delta(i, t, xt);
            check_dominated("coupled interaction death", b, dom, t)?;
            let mut o = Outcome::new(EventKind::InteractionDeath);
            o.dec = Some((comp, i));
            o.z4 = true;
            o.tilde = Some((Some(i), None));
            let accept = if comp == Z3 {
                b
            } else {
                o.inc[0] = Some((Z2, i));
                surplus(inter.delta(i, &z.x), b)
            };
            if rng.random::<f64>() * dom >= accept {
                return Ok(None);
            }
            o
        }
        Stream::ImmigrationX => {
            let l = inter.beta_sample(&z.x, rng);
            rates.ode().eval_into(t, xt);
            let a = check_rate(inter.beta_pointwise(l, &z.x), t, "pointwise immigration")?;
            let b = check_rate(inter.beta_pointwise(l, xt), t, "pointwise immigration")?;
            let mut o = Outcome::new(EventKind::Immigration);
            o.x = Some((None, Some(l)));
            if rng.random::<f64>() < matched_prob(a, b) {
                o.inc[0] = Some((Z1, l));
                o.tilde = Some((None, Some(l)));
            } else {
                o.inc[0] = Some((Z2, l));
                o.z4 = true;
            }
            o
        }
        Stream::ImmigrationTilde => {
            let dom = rates.immigration_dominator();
            let total = rates.immigration_total(t, xt);
            check_dominated("coupled immigration", total, dom, t)?;
            if rng.random::<f64>() * dom >= total {
                return Ok(None);
            }
            let l = inter.beta_sample(xt, rng);
            let a = check_rate(inter.beta_pointwise(l, &z.x), t, "pointwise immigration")?;
            let b = check_rate(inter.beta_pointwise(l, xt), t, "pointwise immigration")?;
            if b <= 0.0 || rng.random::<f64>() * b >= surplus(a, b) {
                return Ok(None);
            }
            let mut o = Outcome::new(EventKind::Immigration);
            o.inc[0] = Some((Z3, l));
            o.tilde = Some((None, Some(l)));
            o
        }
    };
    Ok(Some(out))
}

fn apply(z: &mut Dense, o: &Outcome) {
    if let Some((c, i)) = o.dec {
        z.dec(c, i);
    }
    for (c, i) in o.inc.iter().flatten() {
        z.inc(*c, *i);
    }
    if o.z4 {
        z.z4 += 1;
    }
}

/// Simulates the coupled pair on `[0, T]` from `Z₁(0) = ξ₀`.
///
/// Both pathwise inequalities are checked after every event and a breach is
/// returned as [`SimError::InvariantBreach`]. `τ` is detected at event times
/// and at ODE nodes.
pub fn simulate_coupled(
    model: &ModelSpec,
    initial: &PopulationState,
    n: u64,
    horizon: f64,
    ode: &OdeSolution,
    seed: u64,
    options: &CouplingOptions,
) -> Result<CoupledRun, SimError> {
    let rates = TildeRates::new(model, ode, n)?;
    if ode.end_time() < horizon * (1.0 - 1e-12) {
        return Err(SimError::InvalidInput(format!(
            "trajectory covers [0, {}] but T = {horizon}",
            ode.end_time()
        )));
    }
    let consts = bound_constants(model, ode.m_t(), ode.g_t(), n);
    let mut checks: Vec<f64> = options
        .check_times
        .iter()
        .copied()
        .filter(|t| (0.0..=horizon).contains(t))
        .collect();
    checks.sort_by(f64::total_cmp);
    let mut tr = Tracker {
        model,
        ode,
        n,
        cap: options.compensator_cap.unwrap_or_else(|| default_cap(ode)),
        track: options.track_compensator,
        h: consts.h1 + consts.h2,
        checks,
        next_check: 0,
        last: 0.0,
        cum: Intensity::default(),
        tau: None,
        at_tau: (0, Intensity::default()),
        sup_x: 0.0,
        sup_tilde: 0.0,
        balance: Vec::new(),
        bound: IntensityBoundCheck::default(),
        xt: Vec::new(),
        scratch: (Vec::new(), Vec::new()),
    };

    let mut rng = rng_from_seed(seed);
    let mut z = Dense::new(initial, n);
    tr.observe(&z, 0.0);
    while tr.next_check < tr.checks.len() && tr.checks[tr.next_check] <= 0.0 {
        tr.record_check(&z, 0.0);
        tr.next_check += 1;
    }
    // with state-independent rates every surplus vanishes, so proposals from
    // the trajectory stream for coupled pairs would all be thinned away
    let skip = model.interaction().is_state_independent();
    let mut chans = Vec::new();
    let mut moves = Vec::new();
    let mut xt = Vec::new();
    let (mut xj, mut tj, mut vp) = (Vec::new(), Vec::new(), Vec::new());
    let mut dirty = true;
    let mut total = 0.0;
    let mut t = 0.0;
    let mut events = 0u64;
    loop {
        if dirty {
            channels(model, &rates, &z, n, skip, &mut chans, &mut moves)?;
            total = chans.iter().map(|c| c.rate).sum();
            dirty = false;
        }
        if total <= 0.0 {
            break;
        }
        t += exp_time(&mut rng, total);
        if t > horizon {
            break;
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut ch = chans[chans.len() - 1];
        for c in &chans {
            acc += c.rate;
            if u < acc {
                ch = *c;
                break;
            }
        }
        let Some(o) = resolve(model, &rates, &z, &ch, t, &mut xt, &mut rng)? else {
            continue;
        };
        events += 1;
        if events > options.event_cap {
            return Err(SimError::CapExceeded {
                cap: options.event_cap,
                time: t,
                partial: Box::new(PathRecord::new(model.name(), n, horizon, seed, initial.clone(), xj)),
            });
        }
        tr.advance(&z, t);
        let v_before = z.v();
        let z4_before = z.z4;
        apply(&mut z, &o);
        dirty = true;
        z.check_invariants(t)?;
        if z.v() < v_before || z.z4 < z4_before {
            return Err(SimError::InvariantBreach {
                time: t,
                detail: "decoupling counter decreased".into(),
            });
        }
        if z.v() > v_before {
            vp.push((t, z.v()));
        }
        for (rec, ch) in [(&mut xj, o.x), (&mut tj, o.tilde)] {
            if let Some((from, to)) = ch {
                rec.push(Jump {
                    time: t,
                    kind: o.kind,
                    from,
                    to,
                });
            }
        }
        tr.observe(&z, t);
        tr.check_bound(&z, t);
    }
    tr.advance(&z, horizon);

    Ok(CoupledRun {
        seed,
        n,
        horizon,
        x_path: PathRecord::new(model.name(), n, horizon, seed, initial.clone(), xj),
        tilde_path: PathRecord::new(model.name(), n, horizon, seed, initial.clone(), tj),
        v_path: vp,
        tau: tr.tau,
        final_state: z.to_state(),
        sup_x_error: tr.sup_x,
        sup_tilde_error: tr.sup_tilde,
        balance: tr.balance,
        bound_check: tr.bound,
        events,
    })
}

/// Independent coupled runs with seeds `replica_seed(seed, r)`, in replica
/// order.
pub fn coupled_ensemble(
    model: &ModelSpec,
    initial: &PopulationState,
    n: u64,
    horizon: f64,
    ode: &OdeSolution,
    replicas: usize,
    seed: u64,
    options: &CouplingOptions,
) -> Result<Vec<CoupledRun>, SimError> {
    (0..replicas)
        .into_par_iter()
        .map(|r| simulate_coupled(model, initial, n, horizon, ode, replica_seed(seed, r as u64), options))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BalanceReport {
    pub time: f64,
    /// `V(t∧τ) − ∫₀^{t∧τ} a_N` across replicas.
    pub difference: Summary,
    pub mean_v: f64,
    pub mean_compensator: f64,
    pub within: bool,
}

/// Mean-zero test of the compensated decoupling counter at a recorded check
/// time, within `k_se` standard errors.
pub fn martingale_balance_check(runs: &[CoupledRun], time: f64, k_se: f64) -> Option<BalanceReport> {
    let mut d = Running::default();
    let (mut v, mut c) = (Running::default(), Running::default());
    for r in runs {
        let p = r.balance.iter().find(|p| p.time == time)?;
        d.push(p.v as f64 - p.compensator);
        v.push(p.v as f64);
        c.push(p.compensator);
    }
    if d.count() == 0 {
        return None;
    }
    let difference = d.summary();
    Some(BalanceReport {
        time,
        within: difference.within(0.0, k_se),
        difference,
        mean_v: v.mean(),
        mean_compensator: c.mean(),
    })
}

/// Per-run summary line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledSummary {
    pub replica: usize,
    pub seed: u64,
    pub v_final: u64,
    pub tau: Option<f64>,
    pub sup_x_error: f64,
    pub sup_tilde_error: f64,
    /// `2V(T)/N`, a pathwise bound on `N⁻¹‖X(T) − X̃(T)‖₁`.
    pub decoupling_bound: f64,
}

impl CoupledSummary {
    pub fn from_run(replica: usize, run: &CoupledRun) -> Self {
        Self {
            replica,
            seed: run.seed,
            v_final: run.v_final(),
            tau: run.tau,
            sup_x_error: run.sup_x_error,
            sup_tilde_error: run.sup_tilde_error,
            decoupling_bound: 2.0 * run.v_final() as f64 / run.n as f64,
        }
    }
}

/// CSV of per-run summaries after a `#` header line.
pub fn write_coupling_summary<W: Write>(
    w: &mut W,
    header: &str,
    rows: &[CoupledSummary],
) -> io::Result<()> {
    writeln!(w, "# {header}")?;
    writeln!(
        w,
        "replica,seed,v_final,tau_or_blank,sup_x_error,sup_tilde_error,decoupling_bound"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.replica,
            r.seed,
            r.v_final,
            r.tau.map(|t| t.to_string()).unwrap_or_default(),
            r.sup_x_error,
            r.sup_tilde_error,
            r.decoupling_bound
        )?;
    }
    Ok(())
}
