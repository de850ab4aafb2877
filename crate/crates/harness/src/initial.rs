use hostpar_core::{DensityVector, PopulationState};

use crate::error::HarnessError;

/// Integer counts summing to `N` that approximate `N x₀` by largest-remainder
/// apportionment; ties in the remainder go to the smaller load.
///
/// Each count is within one of `N x₀ⁱ`, so `‖N⁻¹counts − x₀‖₁₁ ≤ (J+1)²/N`
/// where `J` is the largest load in the support.
pub fn round_initial(x0: &DensityVector, n: u64) -> Result<PopulationState, HarnessError> {
    let x = x0.values();
    if x.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(HarnessError::Config("initial density must be finite and >= 0".into()));
    }
    let mass: f64 = x.iter().sum();
    if (mass - 1.0).abs() > 1e-12 {
        return Err(HarnessError::Config(format!("initial density has mass {mass}, not 1")));
    }
    if n == 0 {
        return Err(HarnessError::Config("N must be >= 1".into()));
    }
    let nf = n as f64;
    let mut counts: Vec<u64> = x.iter().map(|v| (v * nf).floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
    let rem = |i: usize| x[i] * nf - counts[i] as f64;
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    let mut left = n.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    // floating-point floors can overshoot by one host
    let mut over = counts.iter().sum::<u64>().saturating_sub(n);
    for i in order.iter().rev() {
        if over == 0 {
            break;
        }
        if counts[*i] > 0 {
            counts[*i] -= 1;
            over -= 1;
        }
    }
    Ok(PopulationState::from_dense(&counts))
}
