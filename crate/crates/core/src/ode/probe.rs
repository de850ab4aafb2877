//! Sensitivity of the trajectory to the initial condition.

use serde::Serialize;

use super::{integrate, OdeSettings, OdeSolution};
use crate::error::OdeError;
use crate::rates::interaction::ModelSpec;
use crate::state::{DensityVector, Norms};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub epsilon: f64,
    /// `sup_t ‖x(t) − y(t)‖₁₁ / ‖x(0) − y(0)‖₁₁`; 1 when `ε = 0`.
    pub ratio: f64,
    /// `|M_T(y) − M_T(x)|`.
    pub m_t_change: f64,
    /// Blow-up time of the perturbed trajectory, if any.
    pub blow_up: Option<f64>,
}

fn sup_l11_gap(a: &OdeSolution, b: &OdeSolution) -> f64 {
    let end = a.end_time().min(b.end_time());
    let mut times: Vec<f64> = a
        .times()
        .iter()
        .chain(b.times())
        .copied()
        .filter(|t| *t <= end)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    let mut sup: f64 = 0.0;
    for t in times {
        a.eval_into(t, &mut xa);
        b.eval_into(t, &mut xb);
        let d: Vec<f64> = xa.iter().zip(&xb).map(|(u, v)| u - v).collect();
        sup = sup.max(d.l11_norm());
    }
    sup
}

/// For each `ε`, integrates from `x₀ + ε e(0)` and reports the amplification
/// of the initial `ℓ₁₁` gap over `[0, T]`.
///
/// The perturbed and reference runs share the truncation of the reference.
pub fn ic_continuity_probe(
    model: &ModelSpec,
    x0: &DensityVector,
    epsilons: &[f64],
    horizon: f64,
    settings: &OdeSettings,
) -> Result<Vec<ProbeRow>, OdeError> {
    let j = settings.resolve_truncation(x0);
    let settings = OdeSettings {
        truncation: Some(j),
        ..settings.clone()
    };
    let reference = integrate(model, x0, horizon, &settings)?;
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(OdeError::InvalidInput(format!("perturbation {eps} must be >= 0")));
        }
        if eps == 0.0 {
            rows.push(ProbeRow {
                epsilon: 0.0,
                ratio: 1.0,
                m_t_change: 0.0,
                blow_up: None,
            });
            continue;
        }
        let mut y0 = x0.values().to_vec();
        y0.resize(j + 1, 0.0);
        y0[0] += eps;
        let gap0: f64 = y0
            .iter()
            .zip(reference.eval(0.0))
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>()
            .l11_norm();
        let y0 = DensityVector::from_values(y0);
        let (perturbed, blow_up) = match integrate(model, &y0, horizon, &settings) {
            Ok(s) => (s, None),
            Err(OdeError::BlowUp { time, partial, .. }) => (*partial, Some(time)),
            Err(e) => return Err(e),
        };
        rows.push(ProbeRow {
            epsilon: eps,
            ratio: sup_l11_gap(&reference, &perturbed) / gap0,
            m_t_change: (perturbed.m_t() - reference.m_t()).abs(),
            blow_up,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::null_model;
    use serde_json::json;

    #[test]
    fn zero_drift_ratio_is_one() {
        let m = null_model(&json!(null)).unwrap();
        let x0 = DensityVector::from_values(vec![0.9, 0.1]);
        let rows = ic_continuity_probe(&m, &x0, &[0.0, 1e-2, 1e-3], 1.0, &OdeSettings::default())
            .unwrap();
        for r in rows {
            assert_eq!(r.ratio, 1.0, "{r:?}");
        }
    }
}
