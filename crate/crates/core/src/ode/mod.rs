//! The deterministic limit `dx/dt = A x + F(x)` on a finite truncation.

mod probe;
mod semigroup;
mod solution;
mod solver;

use serde::{Deserialize, Serialize};

pub use probe::{ic_continuity_probe, ProbeRow};
pub use semigroup::{mild_residual, semigroup_apply, MildResidual, DENSE_EXPONENTIAL_CAP};
pub use solution::OdeSolution;
pub use solver::integrate;

use crate::error::OdeError;
use crate::rates::interaction::{pos, ModelSpec};
use crate::state::DensityVector;

/// Integrator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSettings {
    /// Truncation level `J`; `None` selects [`default_truncation`].
    pub truncation: Option<usize>,
    pub atol: f64,
    pub rtol: f64,
    /// Cap on `‖x(t)‖₁₁`; `None` selects `10³ (1 + ‖x₀‖₁₁)`.
    pub blow_up_cap: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            truncation: None,
            atol: 1e-8,
            rtol: 1e-6,
            blow_up_cap: None,
            max_steps: 2_000_000,
        }
    }
}

impl OdeSettings {
    pub fn with_tolerances(atol: f64, rtol: f64) -> Self {
        Self {
            atol,
            rtol,
            ..Self::default()
        }
    }

    pub fn with_truncation(mut self, j: usize) -> Self {
        self.truncation = Some(j);
        self
    }

    pub fn resolve_truncation(&self, x0: &DensityVector) -> usize {
        self.truncation.unwrap_or_else(|| default_truncation(x0))
    }
}

/// `4 · (largest occupied load) + 50`.
pub fn default_truncation(x0: &DensityVector) -> usize {
    let top = x0
        .values()
        .iter()
        .rposition(|v| *v != 0.0)
        .unwrap_or(0);
    4 * top + 50
}

/// The baseline part `A` as a sparse list of flows.
#[derive(Clone, Debug)]
pub(crate) struct LinearPart {
    flows: Vec<(usize, usize, f64)>,
    exit: Vec<f64>,
}

impl LinearPart {
    pub(crate) fn new(model: &ModelSpec, j: usize) -> Self {
        let baseline = model.baseline();
        let mut flows = Vec::new();
        let mut exit = vec![0.0; j + 1];
        let mut moves = Vec::new();
        for (i, e) in exit.iter_mut().enumerate() {
            baseline.moves(i, &mut moves);
            *e = baseline.death(i);
            for &(t, r) in &moves {
                *e += r;
                if t <= j {
                    flows.push((i, t, r));
                }
            }
        }
        Self { flows, exit }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, e) in self.exit.iter().enumerate() {
            out[i] -= e * x[i];
        }
        for &(from, to, r) in &self.flows {
            out[to] += r * x[from];
        }
    }
}

/// Reusable evaluator of the truncated drift.
#[derive(Debug)]
pub(crate) struct Drift<'a> {
    model: &'a ModelSpec,
    linear: LinearPart,
    xpos: Vec<f64>,
}

impl<'a> Drift<'a> {
    pub(crate) fn new(model: &'a ModelSpec, j: usize) -> Self {
        Self {
            model,
            linear: LinearPart::new(model, j),
            xpos: vec![0.0; j + 1],
        }
    }

    /// Writes the drift at `x₊` into `out`; both have length `J+1`.
    pub(crate) fn eval(&mut self, x: &[f64], out: &mut [f64]) -> Result<(), OdeError> {
        for (p, v) in self.xpos.iter_mut().zip(x) {
            *p = pos(*v);
        }
        out.fill(0.0);
        self.linear.apply(&self.xpos, out);
        self.model.interaction().add_drift(&self.xpos, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(OdeError::NonFinite { time: f64::NAN })
        }
    }

    /// Interaction part `F(x₊)` only.
    pub(crate) fn eval_interaction(&mut self, x: &[f64], out: &mut [f64]) {
        for (p, v) in self.xpos.iter_mut().zip(x) {
            *p = pos(*v);
        }
        out.fill(0.0);
        self.model.interaction().add_drift(&self.xpos, out);
    }
}

/// Drift of the truncated system at `x`, for loads `0..=j`.
pub fn drift(model: &ModelSpec, x: &DensityVector, j: usize) -> Result<DensityVector, OdeError> {
    let mut xv = x.values().to_vec();
    xv.resize(j + 1, 0.0);
    let mut out = vec![0.0; j + 1];
    Drift::new(model, j).eval(&xv, &mut out)?;
    Ok(DensityVector::from_values(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{luchsinger_nonlinear, null_model, pure_death};
    use approx::assert_abs_diff_eq;
    use serde_json::json;

    #[test]
    fn zero_state_has_zero_drift() {
        let m = luchsinger_nonlinear(&json!({
            "lambda": 1.0, "mu": 1.0, "kappa": 1.0,
            "offspring": {"family": "poisson", "mean": 0.8}
        }))
        .unwrap();
        let d = drift(&m, &DensityVector::zeros(10), 10).unwrap();
        assert!(d.values().iter().all(|v| *v == 0.0));
        let n = null_model(&json!(null)).unwrap();
        let d = drift(&n, &DensityVector::unit_mass(3), 5).unwrap();
        assert!(d.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_death_unit_mass_flows_down() {
        let m = pure_death(&json!({"mu": 1.5})).unwrap();
        let d = drift(&m, &DensityVector::unit_mass(1), 3).unwrap();
        assert_eq!(d.values(), &[1.5, -1.5, 0.0, 0.0]);
    }

    #[test]
    fn nonlinear_drift_sums_to_zero() {
        let m = luchsinger_nonlinear(&json!({
            "lambda": 1.0, "mu": 1.0, "kappa": 1.0,
            "offspring": {"family": "poisson", "mean": 0.8}
        }))
        .unwrap();
        let x = DensityVector::from_values(vec![0.5, 0.2, 0.1, 0.1, 0.05, 0.05]);
        let d = drift(&m, &x, 150).unwrap();
        assert_abs_diff_eq!(d.values().iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_entries_are_clipped() {
        let m = pure_death(&json!({"mu": 1.0})).unwrap();
        let x = DensityVector::from_values(vec![0.0, -0.5, 1.0]);
        let d = drift(&m, &x, 2).unwrap();
        assert_eq!(d.values(), &[0.0, 2.0, -2.0]);
    }

    #[test]
    fn default_truncation_rule() {
        let x = DensityVector::from_values(vec![0.9, 0.1, 0.0]);
        assert_eq!(default_truncation(&x), 54);
        assert_eq!(default_truncation(&DensityVector::zeros(3)), 50);
    }
}
