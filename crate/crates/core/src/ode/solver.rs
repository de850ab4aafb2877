//! Dormand–Prince 5(4) with error-per-step control.

use super::solution::OdeSolution;
use super::{Drift, OdeSettings};
use crate::error::OdeError;
use crate::rates::interaction::ModelSpec;
use crate::state::{DensityVector, Norms};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn scaled_rms(v: &[f64], y0: &[f64], y1: &[f64], atol: f64, rtol: f64) -> f64 {
    let n = v.len().max(1) as f64;
    let s: f64 = v
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates the truncated limit equation from `x0` over `[0, horizon]`.
pub fn integrate(
    model: &ModelSpec,
    x0: &DensityVector,
    horizon: f64,
    settings: &OdeSettings,
) -> Result<OdeSolution, OdeError> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(OdeError::InvalidInput(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    if x0.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(OdeError::InvalidInput(
            "initial density must be finite and nonnegative".into(),
        ));
    }
    if !(settings.atol > 0.0 && settings.rtol >= 0.0) {
        return Err(OdeError::InvalidInput("tolerances must be positive".into()));
    }
    let j = settings.resolve_truncation(x0);
    let cap = settings
        .blow_up_cap
        .unwrap_or(1e3 * (1.0 + x0.l11_norm()));

    let mut y: Vec<f64> = x0.values().to_vec();
    y.resize(j + 1, 0.0);
    let dim = j + 1;
    let mut drift = Drift::new(model, j);
    let mut f0 = vec![0.0; dim];
    drift
        .eval(&y, &mut f0)
        .map_err(|_| OdeError::NonFinite { time: 0.0 })?;

    let mut sol = OdeSolution::start(model.clone(), j, settings.clone(), horizon, cap, y.clone(), f0.clone());
    if horizon == 0.0 {
        sol.finish();
        return Ok(sol);
    }

    let (atol, rtol) = (settings.atol, settings.rtol);
    let mut h = initial_step(&mut drift, &y, &f0, horizon, atol, rtol)?;
    let mut t = 0.0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y1 = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut steps = 0usize;

    while t < horizon {
        steps += 1;
        if steps > settings.max_steps {
            return Err(OdeError::StepUnderflow { time: t, step: h });
        }
        let last = t + h >= horizon;
        if last {
            h = horizon - t;
        }
        k[0].copy_from_slice(&f0);
        for s in 1..7 {
            for (i, st) in stage.iter_mut().enumerate() {
                let mut acc = y[i];
                for (r, a) in A[s].iter().enumerate().take(s) {
                    if *a != 0.0 {
                        acc += h * a * k[r][i];
                    }
                }
                *st = acc;
            }
            drift
                .eval(&stage, &mut k[s])
                .map_err(|_| OdeError::NonFinite { time: t + C[s] * h })?;
            if s == 6 {
                y1.copy_from_slice(&stage);
            }
        }
        for (i, e) in err.iter_mut().enumerate() {
            *e = h * E.iter().zip(k.iter()).map(|(w, kr)| w * kr[i]).sum::<f64>();
        }
        let en = scaled_rms(&err, &y, &y1, atol, rtol);
        if !en.is_finite() {
            return Err(OdeError::NonFinite { time: t });
        }
        if en <= 1.0 {
            t = if last { horizon } else { t + h };
            std::mem::swap(&mut y, &mut y1);
            f0.copy_from_slice(&k[6]);
            sol.push(t, y.clone(), f0.clone());
            if y.l11_norm() > cap {
                sol.mark_blow_up(t);
                return Err(OdeError::BlowUp {
                    time: t,
                    cap,
                    partial: Box::new(sol),
                });
            }
            let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            h *= (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { time: t, step: h });
        }
    }
    sol.finish();
    Ok(sol)
}

fn initial_step(
    drift: &mut Drift<'_>,
    y: &[f64],
    f0: &[f64],
    horizon: f64,
    atol: f64,
    rtol: f64,
) -> Result<f64, OdeError> {
    let zero = vec![0.0; y.len()];
    let d0 = scaled_rms(y, y, &zero, atol, rtol);
    let d1 = scaled_rms(f0, y, &zero, atol, rtol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(horizon);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    drift
        .eval(&y1, &mut f1)
        .map_err(|_| OdeError::NonFinite { time: h0 })?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_rms(&diff, y, &zero, atol, rtol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(horizon))
}
