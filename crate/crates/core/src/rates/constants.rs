//! Explicitly computable constants built from the declared envelopes.

use serde::Serialize;

use super::interaction::{Envelopes, ModelSpec};

/// ℓ₁₁ Lipschitz constant of the interaction drift on the ball of radius `M`:
///
/// `F_M = a10 + ã11(0)M + M ã11(M) + a00 + ã01(0)M + M ã01(M)
///        + b̃11(M) + d0 + d̃1(0)M + M d̃1(M)`.
pub fn lipschitz_f(envelopes: &Envelopes, m: f64) -> f64 {
    let e = envelopes;
    e.a10
        + e.a11.eval(0.0) * m
        + m * e.a11.eval(m)
        + e.a00
        + e.a01.eval(0.0) * m
        + m * e.a01.eval(m)
        + e.b11.eval(m)
        + e.d0
        + e.d1.eval(0.0) * m
        + m * e.d1.eval(m)
}

pub fn lipschitz_f_model(model: &ModelSpec, m: f64) -> f64 {
    lipschitz_f(&model.envelopes(), m)
}

/// Constants controlling moment growth, window fluctuations and the coupling
/// intensity, for a trajectory with ℓ₁₁ sup `M_T` and ℓ₁ sup `G_T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundConstants {
    pub m_t: f64,
    pub g_t: f64,
    pub n: u64,
    /// `F_{M_T}`.
    pub f_m: f64,
    /// `a10 − a00`.
    pub a0_star: f64,
    /// `ã11(0) − ã01(0)`.
    pub a1_star: f64,
    /// `a00 + ã01(0) M_T`: dominating rate of interaction jumps.
    pub chi: f64,
    /// `(a10 + ã11(0) M_T) / χ`; undefined when `χ = 0`.
    pub a3: Option<f64>,
    /// Transition-rate bound used for window lengths; always `≥ 1`.
    pub h_t: f64,
    /// `G_T ã01(M_T) + b̃01(M_T) + G_T d̃1(M_T)`.
    pub h1: f64,
    /// `ã01(M_T) + d̃1(M_T)`.
    pub h2: f64,
}

pub fn bound_constants(model: &ModelSpec, m_t: f64, g_t: f64, n: u64) -> BoundConstants {
    let e = model.envelopes();
    let baseline = model.baseline();
    let (m1, m2) = (baseline.m1(), baseline.m2());

    let chi = e.a00 + e.a01.eval(0.0) * m_t;
    let a3 = (chi > 0.0).then(|| (e.a10 + e.a11.eval(0.0) * m_t) / chi);
    let scale = (n as f64 * m_t).powf(m2 - 1.0);
    let h_t = 2f64.powf(m2 - 1.0) * m1
        + (e.b10 + e.a00 + e.b01.eval(0.0) + e.d0 + g_t * (e.a01.eval(0.0) + e.d1.eval(0.0)))
            / scale;
    assert!(h_t >= 1.0, "H_T = {h_t} < 1; baseline m1 must be >= 1");

    BoundConstants {
        m_t,
        g_t,
        n,
        f_m: lipschitz_f(&e, m_t),
        a0_star: e.a10 - e.a00,
        a1_star: e.a11.eval(0.0) - e.a01.eval(0.0),
        chi,
        a3,
        h_t,
        h1: g_t * e.a01.eval(m_t) + e.b01.eval(m_t) + g_t * e.d1.eval(m_t),
        h2: e.a01.eval(m_t) + e.d1.eval(m_t),
    }
}

/// Upper bound on `sup_t N⁻¹ Σ_l (l+1) E X̃ˡ(t)` over `[0, T]`:
/// `{‖x(0)‖₁₁ + T(b10 + b̃11(0) M_T)} exp{(w + a0* + a1* M_T) T}`.
pub fn moment_bound(model: &ModelSpec, x0_l11: f64, horizon: f64, m_t: f64) -> f64 {
    let e = model.envelopes();
    let w = model.baseline().w();
    let a0 = e.a10 - e.a00;
    let a1 = e.a11.eval(0.0) - e.a01.eval(0.0);
    (x0_l11 + horizon * (e.b10 + e.b11.eval(0.0) * m_t)) * ((w + a0 + a1 * m_t) * horizon).exp()
}

/// Pure-birth comparison bound on `E‖X(T)‖₁` for a population started with
/// `N` hosts: `N(1 + b10/b̃01) e^{T b̃01}`, or `N(1 + b10 T)` when `b̃01(0) = 0`.
pub fn host_growth_bound(envelopes: &Envelopes, n: u64, horizon: f64) -> f64 {
    let b01 = envelopes.b01.eval(0.0);
    let n = n as f64;
    if b01 > 0.0 {
        n * (1.0 + envelopes.b10 / b01) * (horizon * b01).exp()
    } else {
        n * (1.0 + envelopes.b10 * horizon)
    }
}

/// `g(x) = 7 x e^{2x}`, the growth factor of the martingale variance bound.
pub fn martingale_growth(x: f64) -> f64 {
    7.0 * x * (2.0 * x).exp()
}
