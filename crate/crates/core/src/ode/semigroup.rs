//! The baseline semigroup `P(t)ᵀ` on the truncation and the mild-form
//! residual of an integrated trajectory.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Drift, OdeSolution};
use crate::error::OdeError;
use crate::expm::expm;
use crate::rates::baseline::{truncated_generator, BaselineGenerator};
use crate::state::{DensityVector, Norms};

/// Largest truncation for which dense exponentials are formed.
pub const DENSE_EXPONENTIAL_CAP: usize = 400;

fn check_cap(j: usize) -> Result<(), OdeError> {
    if j > DENSE_EXPONENTIAL_CAP {
        Err(OdeError::TruncationTooLarge {
            j,
            cap: DENSE_EXPONENTIAL_CAP,
        })
    } else {
        Ok(())
    }
}

/// `P(t)ᵀ x` on loads `0..=j`.
pub fn semigroup_apply(
    baseline: &BaselineGenerator,
    x: &DensityVector,
    t: f64,
    j: usize,
) -> Result<DensityVector, OdeError> {
    check_cap(j)?;
    if t < 0.0 {
        return Err(OdeError::InvalidInput(format!("negative time {t}")));
    }
    let mut xv = x.values().to_vec();
    xv.resize(j + 1, 0.0);
    if t == 0.0 {
        return Ok(DensityVector::from_values(xv));
    }
    let p = expm(&(truncated_generator(baseline, j) * t));
    let y = p.transpose() * DVector::from_vec(xv);
    Ok(DensityVector::from_values(y.as_slice().to_vec()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MildResidual {
    pub time: f64,
    /// `‖x(t) − P(t)ᵀx(0) − ∫₀ᵗ P(t−s)ᵀ F(x(s)) ds‖₁₁`.
    pub residual: f64,
    pub panels: usize,
}

/// Mild-form residual of `sol` at `t`, with the convolution integral by
/// composite Simpson on `2·panels` subintervals of the dense output.
pub fn mild_residual(sol: &OdeSolution, t: f64, panels: usize) -> Result<MildResidual, OdeError> {
    let j = sol.truncation();
    check_cap(j)?;
    if !(0.0..=sol.end_time()).contains(&t) {
        return Err(OdeError::InvalidInput(format!(
            "t = {t} outside the solution span [0, {}]",
            sol.end_time()
        )));
    }
    if t == 0.0 {
        return Ok(MildResidual {
            time: 0.0,
            residual: 0.0,
            panels,
        });
    }
    let panels = panels.max(1);
    let m = 2 * panels;
    let h = t / m as f64;
    let q = truncated_generator(sol.model().baseline(), j);
    // Eᵀ with E = exp(Qh), so that P(t - s_k)ᵀ = (Eᵀ)^{m-k}
    let step: DMatrix<f64> = expm(&(&q * h)).transpose();

    let mut drift = Drift::new(sol.model(), j);
    let mut xs = Vec::new();
    let mut fs = vec![0.0; j + 1];
    let mut acc = DVector::<f64>::zeros(j + 1);
    for k in 0..=m {
        if k > 0 {
            acc = &step * acc;
        }
        let w = if k == 0 || k == m {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sol.eval_into(k as f64 * h, &mut xs);
        drift.eval_interaction(&xs, &mut fs);
        for (a, f) in acc.iter_mut().zip(&fs) {
            *a += w * h / 3.0 * f;
        }
    }

    let x0 = DVector::from_vec(sol.eval(0.0));
    let p_t = expm(&(&q * t)).transpose();
    let free = p_t * x0;
    let xt = sol.eval(t);
    let diff: Vec<f64> = (0..=j).map(|i| xt[i] - free[i] - acc[i]).collect();
    Ok(MildResidual {
        time: t,
        residual: diff.l11_norm(),
        panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{constant_rates, pure_death};
    use crate::ode::{integrate, OdeSettings};
    use approx::assert_abs_diff_eq;
    use serde_json::json;

    #[test]
    fn identity_at_time_zero() {
        let m = pure_death(&json!({"mu": 1.0})).unwrap();
        let x = DensityVector::from_values(vec![0.2, 0.3, 0.5]);
        let y = semigroup_apply(m.baseline(), &x, 0.0, 2).unwrap();
        assert_eq!(y.values(), x.values());
    }

    #[test]
    fn pure_death_two_state_closed_form() {
        let m = pure_death(&json!({"mu": 1.0})).unwrap();
        let y = semigroup_apply(m.baseline(), &DensityVector::unit_mass(1), 1.0, 1).unwrap();
        let e = (-1f64).exp();
        assert_abs_diff_eq!(y.get(0), 1.0 - e, epsilon = 1e-13);
        assert_abs_diff_eq!(y.get(1), e, epsilon = 1e-13);
    }

    #[test]
    fn cap_is_enforced() {
        let m = pure_death(&json!({"mu": 1.0})).unwrap();
        assert!(matches!(
            semigroup_apply(m.baseline(), &DensityVector::unit_mass(1), 1.0, 401),
            Err(OdeError::TruncationTooLarge { .. })
        ));
    }

    #[test]
    fn pure_death_mild_residual_is_small() {
        let m = pure_death(&json!({"mu": 1.0})).unwrap();
        let x0 = DensityVector::from_values(vec![0.0, 0.5, 0.0, 0.5]);
        let sol = integrate(&m, &x0, 2.0, &OdeSettings::default()).unwrap();
        assert_eq!(mild_residual(&sol, 0.0, 16).unwrap().residual, 0.0);
        let r = mild_residual(&sol, 2.0, 16).unwrap();
        assert!(r.residual <= 1e-6, "{r:?}");
    }

    #[test]
    fn immigration_model_mild_residual() {
        let m = constant_rates(&json!({
            "immigration": 0.7, "immigration_load": 2, "delta": 0.3,
            "baseline": {"mu": 1.0}
        }))
        .unwrap();
        let x0 = DensityVector::from_values(vec![0.5, 0.5]);
        let sol = integrate(&m, &x0, 1.5, &OdeSettings::default().with_truncation(30)).unwrap();
        let r = mild_residual(&sol, 1.5, 64).unwrap();
        assert!(r.residual <= 1e-5, "{r:?}");
    }
}
