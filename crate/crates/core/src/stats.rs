//! Running means and standard errors.

use serde::Serialize;

/// Welford accumulator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Running {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn summary(&self) -> Summary {
        Summary {
            n: self.n,
            mean: self.mean,
            se: self.std_error(),
        }
    }
}

impl FromIterator<f64> for Running {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut r = Running::default();
        for v in iter {
            r.push(v);
        }
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n: u64,
    pub mean: f64,
    pub se: f64,
}

impl Summary {
    /// `|mean − target| ≤ k · se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

/// `k + 1` equally spaced points on `[0, T]`.
pub fn grid_times(horizon: f64, k: usize) -> Vec<f64> {
    let k = k.max(1);
    (0..=k).map(|j| horizon * j as f64 / k as f64).collect()
}

/// Ordinary least-squares slope and intercept of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_two_pass_formulas() {
        let v = [1.0, 4.0, 2.5, -3.0, 7.25];
        let r: Running = v.iter().copied().collect();
        let mean = v.iter().sum::<f64>() / 5.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((r.mean() - mean).abs() < 1e-14);
        assert!((r.variance() - var).abs() < 1e-12);
        assert!((r.std_error() - (var / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ols_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -0.5 * v + 2.0).collect();
        let (s, c) = ols(&x, &y).unwrap();
        assert!((s + 0.5).abs() < 1e-12 && (c - 2.0).abs() < 1e-12);
        assert!(ols(&[1.0], &[1.0]).is_none());
    }
}
