//! State-dependent interaction rates and their declared envelopes.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::baseline::BaselineGenerator;

/// A monotone envelope function `z ↦ ã(z)` on `z ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    Constant(f64),
    /// `at_zero + slope · z`
    Affine { at_zero: f64, slope: f64 },
}

impl Envelope {
    pub const ZERO: Envelope = Envelope::Constant(0.0);

    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Envelope::Constant(c) => c,
            Envelope::Affine { at_zero, slope } => at_zero + slope * z.max(0.0),
        }
    }

    pub fn scaled(&self, k: f64) -> Envelope {
        match *self {
            Envelope::Constant(c) => Envelope::Constant(c * k),
            Envelope::Affine { at_zero, slope } => Envelope::Affine {
                at_zero: at_zero * k,
                slope: slope * k,
            },
        }
    }

    fn is_nonnegative(&self) -> bool {
        match *self {
            Envelope::Constant(c) => c >= 0.0,
            Envelope::Affine { at_zero, slope } => at_zero >= 0.0 && slope >= 0.0,
        }
    }
}

/// Declared local-boundedness and Lipschitz constants of the interaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    pub a00: f64,
    pub a10: f64,
    pub b10: f64,
    pub d0: f64,
    pub a01: Envelope,
    pub a11: Envelope,
    pub b01: Envelope,
    pub b11: Envelope,
    pub d1: Envelope,
}

impl Envelopes {
    pub const ZERO: Envelopes = Envelopes {
        a00: 0.0,
        a10: 0.0,
        b10: 0.0,
        d0: 0.0,
        a01: Envelope::ZERO,
        a11: Envelope::ZERO,
        b01: Envelope::ZERO,
        b11: Envelope::ZERO,
        d1: Envelope::ZERO,
    };

    pub fn is_nonnegative(&self) -> bool {
        [self.a00, self.a10, self.b10, self.d0].iter().all(|v| *v >= 0.0)
            && [self.a01, self.a11, self.b01, self.b11, self.d1]
                .iter()
                .all(Envelope::is_nonnegative)
    }

    /// Bound on `Σ_l α_il(x)` over densities with `‖x₊‖₁ ≤ g`.
    pub fn alpha_rate_bound(&self, g: f64) -> f64 {
        self.a00 + self.a01.eval(0.0) * g
    }

    /// Bound on `Σ_i β_i(x)` over densities with `‖x₊‖₁ ≤ g`.
    pub fn beta_rate_bound(&self, g: f64) -> f64 {
        self.b10 + self.b01.eval(0.0) * g
    }

    /// Bound on `sup_i δ_i(x)` over densities with `‖x₊‖₁ ≤ g`.
    pub fn delta_rate_bound(&self, g: f64) -> f64 {
        self.d0 + self.d1.eval(0.0) * g
    }
}

#[inline]
pub(crate) fn pos(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Interaction rates `α_il(x)`, `β_i(x)`, `δ_i(x)` evaluated at a density.
///
/// Densities are dense slices indexed by load; entries beyond the slice are
/// zero. Implementations evaluate at the positive part `x₊`, so slightly
/// negative integrator output is harmless. All methods are pure.
pub trait Interaction: Send + Sync + fmt::Debug {
    /// `Σ_{l≠i} α_il(x)`.
    fn alpha_total(&self, load: usize, x: &[f64]) -> f64;

    /// Draws a target load `l ≠ i` with probability `α_il(x) / alpha_total`.
    /// Only called when `alpha_total(load, x) > 0`.
    fn alpha_sample(&self, load: usize, x: &[f64], rng: &mut dyn RngCore) -> usize;

    /// `α_il(x)`; zero for `l = i`.
    fn alpha_pointwise(&self, load: usize, target: usize, x: &[f64]) -> f64;

    /// Whether `α_i·` can be nonzero for this source load at any density.
    fn alpha_active(&self, _load: usize) -> bool {
        true
    }

    /// `Σ_{l≠i} (l+1) α_il(x)` when available in closed form.
    fn alpha_moment(&self, _load: usize, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Fills `out[l] = α_il(x)` for `l ≤ cap`.
    fn alpha_row(&self, load: usize, x: &[f64], cap: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..=cap).map(|l| {
            if l == load {
                0.0
            } else {
                self.alpha_pointwise(load, l, x)
            }
        }));
    }

    /// `Σ_i β_i(x)`.
    fn beta_total(&self, _x: &[f64]) -> f64 {
        0.0
    }

    /// Draws an immigrant load with probability `β_i(x) / beta_total`.
    fn beta_sample(&self, _x: &[f64], _rng: &mut dyn RngCore) -> usize {
        unreachable!("beta_sample called on a model without immigration")
    }

    fn beta_pointwise(&self, _load: usize, _x: &[f64]) -> f64 {
        0.0
    }

    /// `Σ_i (i+1) β_i(x)` when available in closed form.
    fn beta_moment(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }

    /// Fills `out[i] = β_i(x)` for `i ≤ cap`.
    fn beta_row(&self, x: &[f64], cap: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..=cap).map(|i| self.beta_pointwise(i, x)));
    }

    fn has_immigration(&self) -> bool {
        false
    }

    /// Interaction death rate `δ_i(x)`.
    fn delta(&self, _load: usize, _x: &[f64]) -> f64 {
        0.0
    }

    fn delta_active(&self, _load: usize) -> bool {
        false
    }

    /// True when every interaction rate is independent of `x`.
    fn is_state_independent(&self) -> bool {
        false
    }

    fn envelopes(&self) -> Envelopes;

    /// Adds the interaction part of the drift,
    /// `Σ_{l≠i} x_l α_li(x) − x_i Σ_l α_il(x) + β_i(x) − x_i δ_i(x)`,
    /// to `out[i]` for `i < out.len()`. `x` must already be nonnegative.
    fn add_drift(&self, x: &[f64], out: &mut [f64]) {
        let cap = out.len().saturating_sub(1);
        let mut row = Vec::with_capacity(cap + 1);
        for (l, &xl) in x.iter().enumerate() {
            if xl <= 0.0 || !self.alpha_active(l) {
                continue;
            }
            self.alpha_row(l, x, cap, &mut row);
            for (i, r) in row.iter().enumerate() {
                out[i] += xl * r;
            }
            if l <= cap {
                out[l] -= xl * self.alpha_total(l, x);
            }
        }
        if self.has_immigration() {
            self.beta_row(x, cap, &mut row);
            for (o, b) in out.iter_mut().zip(&row) {
                *o += b;
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            if self.delta_active(i) {
                let xi = x.get(i).copied().unwrap_or(0.0);
                *o -= xi * self.delta(i, x);
            }
        }
    }
}

/// `Σ_{l≠i, l≤cap} |α_il(x) − α_il(y)|` and a bound on the omitted tail.
pub fn alpha_l1_difference(
    model: &dyn Interaction,
    load: usize,
    x: &[f64],
    y: &[f64],
    cap: usize,
    scratch: &mut (Vec<f64>, Vec<f64>),
) -> (f64, f64) {
    if !model.alpha_active(load) {
        return (0.0, 0.0);
    }
    let (rx, ry) = scratch;
    model.alpha_row(load, x, cap, rx);
    model.alpha_row(load, y, cap, ry);
    let mut partial = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (a, b) in rx.iter().zip(ry.iter()) {
        partial += (a - b).abs();
        sx += a;
        sy += b;
    }
    let slack = pos(model.alpha_total(load, x) - sx) + pos(model.alpha_total(load, y) - sy);
    (partial, slack)
}

/// `Σ_{i≤cap} |β_i(x) − β_i(y)|` and a bound on the omitted tail.
pub fn beta_l1_difference(
    model: &dyn Interaction,
    x: &[f64],
    y: &[f64],
    cap: usize,
    scratch: &mut (Vec<f64>, Vec<f64>),
) -> (f64, f64) {
    if !model.has_immigration() {
        return (0.0, 0.0);
    }
    let (rx, ry) = scratch;
    model.beta_row(x, cap, rx);
    model.beta_row(y, cap, ry);
    let mut partial = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (a, b) in rx.iter().zip(ry.iter()) {
        partial += (a - b).abs();
        sx += a;
        sy += b;
    }
    let slack = pos(model.beta_total(x) - sx) + pos(model.beta_total(y) - sy);
    (partial, slack)
}

/// A complete model: baseline chain plus interaction.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    name: String,
    params: serde_json::Value,
    baseline: BaselineGenerator,
    interaction: Arc<dyn Interaction>,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        params: serde_json::Value,
        baseline: BaselineGenerator,
        interaction: Arc<dyn Interaction>,
    ) -> Self {
        Self {
            name: name.into(),
            params,
            baseline,
            interaction,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &serde_json::Value {
        &self.params
    }

    pub fn baseline(&self) -> &BaselineGenerator {
        &self.baseline
    }

    pub fn interaction(&self) -> &dyn Interaction {
        self.interaction.as_ref()
    }

    pub fn envelopes(&self) -> Envelopes {
        self.interaction.envelopes()
    }

    /// Same dynamics with replaced envelope declarations. Used to inject
    /// faults into dominator-based samplers.
    pub fn with_envelopes(&self, envelopes: Envelopes) -> Self {
        Self {
            name: self.name.clone(),
            params: self.params.clone(),
            baseline: self.baseline.clone(),
            interaction: Arc::new(EnvelopeOverride {
                inner: self.interaction.clone(),
                envelopes,
            }),
        }
    }
}

#[derive(Debug)]
struct EnvelopeOverride {
    inner: Arc<dyn Interaction>,
    envelopes: Envelopes,
}

impl Interaction for EnvelopeOverride {
    fn alpha_total(&self, load: usize, x: &[f64]) -> f64 {
        self.inner.alpha_total(load, x)
    }
    fn alpha_sample(&self, load: usize, x: &[f64], rng: &mut dyn RngCore) -> usize {
        self.inner.alpha_sample(load, x, rng)
    }
    fn alpha_pointwise(&self, load: usize, target: usize, x: &[f64]) -> f64 {
        self.inner.alpha_pointwise(load, target, x)
    }
    fn alpha_active(&self, load: usize) -> bool {
        self.inner.alpha_active(load)
    }
    fn alpha_moment(&self, load: usize, x: &[f64]) -> Option<f64> {
        self.inner.alpha_moment(load, x)
    }
    fn alpha_row(&self, load: usize, x: &[f64], cap: usize, out: &mut Vec<f64>) {
        self.inner.alpha_row(load, x, cap, out)
    }
    fn beta_total(&self, x: &[f64]) -> f64 {
        self.inner.beta_total(x)
    }
    fn beta_sample(&self, x: &[f64], rng: &mut dyn RngCore) -> usize {
        self.inner.beta_sample(x, rng)
    }
    fn beta_pointwise(&self, load: usize, x: &[f64]) -> f64 {
        self.inner.beta_pointwise(load, x)
    }
    fn beta_moment(&self, x: &[f64]) -> Option<f64> {
        self.inner.beta_moment(x)
    }
    fn beta_row(&self, x: &[f64], cap: usize, out: &mut Vec<f64>) {
        self.inner.beta_row(x, cap, out)
    }
    fn has_immigration(&self) -> bool {
        self.inner.has_immigration()
    }
    fn delta(&self, load: usize, x: &[f64]) -> f64 {
        self.inner.delta(load, x)
    }
    fn delta_active(&self, load: usize) -> bool {
        self.inner.delta_active(load)
    }
    fn is_state_independent(&self) -> bool {
        self.inner.is_state_independent()
    }
    fn envelopes(&self) -> Envelopes {
        self.envelopes
    }
    fn add_drift(&self, x: &[f64], out: &mut [f64]) {
        self.inner.add_drift(x, out)
    }
}

/// Interaction with every rate identically zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoInteraction;

impl Interaction for NoInteraction {
    fn alpha_total(&self, _load: usize, _x: &[f64]) -> f64 {
        0.0
    }
    fn alpha_sample(&self, _load: usize, _x: &[f64], _rng: &mut dyn RngCore) -> usize {
        unreachable!("alpha_sample called on a model without interaction moves")
    }
    fn alpha_pointwise(&self, _load: usize, _target: usize, _x: &[f64]) -> f64 {
        0.0
    }
    fn alpha_active(&self, _load: usize) -> bool {
        false
    }
    fn alpha_moment(&self, _load: usize, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }
    fn is_state_independent(&self) -> bool {
        true
    }
    fn envelopes(&self) -> Envelopes {
        Envelopes::ZERO
    }
    fn add_drift(&self, _x: &[f64], _out: &mut [f64]) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_evaluation() {
        assert_eq!(Envelope::Constant(2.0).eval(10.0), 2.0);
        let e = Envelope::Affine {
            at_zero: 1.0,
            slope: 0.5,
        };
        assert_eq!(e.eval(4.0), 3.0);
        assert_eq!(e.scaled(2.0).eval(4.0), 6.0);
        assert!(Envelopes::ZERO.is_nonnegative());
    }

    #[test]
    fn rate_bounds_follow_envelopes() {
        let env = Envelopes {
            a00: 0.5,
            a01: Envelope::Constant(2.0),
            b10: 0.1,
            b01: Envelope::Constant(3.0),
            d0: 0.2,
            d1: Envelope::Constant(1.0),
            ..Envelopes::ZERO
        };
        assert_eq!(env.alpha_rate_bound(2.0), 4.5);
        assert_eq!(env.beta_rate_bound(1.0), 3.1);
        assert_eq!(env.delta_rate_bound(1.0), 1.2);
    }
}
