//! Per-parasite transmission laws `F₁` and their `i`-fold convolutions `Fᵢ`.

use std::sync::OnceLock;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Offspring law `F₁` on the nonnegative integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OffspringLaw {
    /// All mass at `at`.
    PointMass { at: usize },
    Poisson { mean: f64 },
    /// `P(k) = (1-p)^k p`, `k ≥ 0`.
    Geometric { p: f64 },
    /// Explicit finite probability table indexed from 0.
    Table { probs: Vec<f64> },
}

impl OffspringLaw {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            OffspringLaw::PointMass { .. } => Ok(()),
            OffspringLaw::Poisson { mean } if mean.is_finite() && *mean >= 0.0 => Ok(()),
            OffspringLaw::Geometric { p } if *p > 0.0 && *p <= 1.0 => Ok(()),
            OffspringLaw::Table { probs } => {
                if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(ModelError::InvalidParameter(
                        "offspring table must be nonempty with nonnegative entries".into(),
                    ));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(ModelError::InvalidParameter(format!(
                        "offspring table sums to {total}, not 1"
                    )));
                }
                Ok(())
            }
            other => Err(ModelError::InvalidParameter(format!(
                "invalid offspring law {other:?}"
            ))),
        }
    }

    /// Mean `θ` of a single draw.
    pub fn mean(&self) -> f64 {
        match self {
            OffspringLaw::PointMass { at } => *at as f64,
            OffspringLaw::Poisson { mean } => *mean,
            OffspringLaw::Geometric { p } => (1.0 - p) / p,
            OffspringLaw::Table { probs } => {
                probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
            }
        }
    }

    /// `p_{i0}`: probability that `i` parasites transmit nothing.
    pub fn zero_prob(&self, i: usize) -> f64 {
        if i == 0 {
            return 1.0;
        }
        let i = i as f64;
        match self {
            OffspringLaw::PointMass { at } => {
                if *at == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            OffspringLaw::Poisson { mean } => (-i * mean).exp(),
            OffspringLaw::Geometric { p } => (i * p.ln()).exp(),
            OffspringLaw::Table { probs } => {
                if probs[0] == 0.0 {
                    0.0
                } else {
                    (i * probs[0].ln()).exp()
                }
            }
        }
    }

    /// `p_{il}` for `l = 0..=cap`.
    pub fn convolution_row(&self, i: usize, cap: usize) -> Vec<f64> {
        let mut row = vec![0.0; cap + 1];
        if i == 0 {
            row[0] = 1.0;
            return row;
        }
        match self {
            OffspringLaw::PointMass { at } => {
                if i * at <= cap {
                    row[i * at] = 1.0;
                }
            }
            OffspringLaw::Poisson { mean } => {
                let m = i as f64 * mean;
                if m == 0.0 {
                    row[0] = 1.0;
                } else {
                    let lm = m.ln();
                    let mut logp = -m;
                    row[0] = logp.exp();
                    for (l, slot) in row.iter_mut().enumerate().skip(1) {
                        logp += lm - (l as f64).ln();
                        *slot = logp.exp();
                    }
                }
            }
            OffspringLaw::Geometric { p } => {
                // negative binomial with i successes
                let fi = i as f64;
                if *p == 1.0 {
                    row[0] = 1.0;
                } else {
                    let lq = (1.0 - p).ln();
                    let mut logp = fi * p.ln();
                    row[0] = logp.exp();
                    for (l, slot) in row.iter_mut().enumerate().skip(1) {
                        logp += ((l as f64 + fi - 1.0) / l as f64).ln() + lq;
                        *slot = logp.exp();
                    }
                }
            }
            OffspringLaw::Table { probs } => {
                let base: Vec<f64> = probs.iter().copied().take(cap + 1).collect();
                let mut acc = vec![0.0; cap + 1];
                acc[0] = 1.0;
                for _ in 0..i {
                    let mut next = vec![0.0; cap + 1];
                    for (a, &pa) in acc.iter().enumerate() {
                        if pa == 0.0 {
                            continue;
                        }
                        for (b, &pb) in base.iter().enumerate() {
                            if a + b > cap {
                                break;
                            }
                            next[a + b] += pa * pb;
                        }
                    }
                    acc = next;
                }
                row = acc;
            }
        }
        row
    }

    /// Sum of `i` independent draws.
    pub fn sample_sum(&self, i: usize, rng: &mut dyn RngCore) -> usize {
        if i == 0 {
            return 0;
        }
        match self {
            OffspringLaw::PointMass { at } => i * at,
            OffspringLaw::Poisson { mean } => {
                let m = i as f64 * mean;
                if m <= 0.0 {
                    0
                } else {
                    Poisson::new(m).expect("positive finite mean").sample(rng) as usize
                }
            }
            OffspringLaw::Geometric { p } => (0..i)
                .map(|_| {
                    let mut k = 0;
                    while rng.random::<f64>() >= *p {
                        k += 1;
                    }
                    k
                })
                .sum(),
            OffspringLaw::Table { probs } => (0..i)
                .map(|_| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    for (k, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            return k;
                        }
                    }
                    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
                })
                .sum(),
        }
    }

    /// Sum of `i` draws conditioned to be positive, by rejection.
    /// Requires `zero_prob(i) < 1`.
    pub fn sample_positive_sum(&self, i: usize, rng: &mut dyn RngCore) -> usize {
        debug_assert!(self.zero_prob(i) < 1.0);
        loop {
            let l = self.sample_sum(i, rng);
            if l > 0 {
                return l;
            }
        }
    }
}

/// Cached `p_{il}` table for `i, l ≤ cap`, with direct evaluation beyond it.
#[derive(Debug)]
pub struct ConvolutionTable {
    law: OffspringLaw,
    cap: usize,
    rows: OnceLock<Vec<Vec<f64>>>,
    zero: Vec<f64>,
}

impl ConvolutionTable {
    pub const DEFAULT_CAP: usize = 320;

    pub fn new(law: OffspringLaw, cap: usize) -> Self {
        let zero = (0..=cap).map(|i| law.zero_prob(i)).collect();
        Self {
            law,
            cap,
            rows: OnceLock::new(),
            zero,
        }
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    fn rows(&self) -> &Vec<Vec<f64>> {
        self.rows.get_or_init(|| {
            (0..=self.cap)
                .map(|i| self.law.convolution_row(i, self.cap))
                .collect()
        })
    }

    /// `p_{il}`.
    pub fn prob(&self, i: usize, l: usize) -> f64 {
        if i <= self.cap && l <= self.cap {
            self.rows()[i][l]
        } else {
            self.law.convolution_row(i, l)[l]
        }
    }

    /// `p_{i0}`.
    pub fn zero_prob(&self, i: usize) -> f64 {
        self.zero
            .get(i)
            .copied()
            .unwrap_or_else(|| self.law.zero_prob(i))
    }

    /// Row `p_{i·}` restricted to `l ≤ cap`.
    pub fn row_into(&self, i: usize, cap: usize, out: &mut Vec<f64>) {
        out.clear();
        if i <= self.cap && cap <= self.cap {
            out.extend_from_slice(&self.rows()[i][..=cap]);
        } else {
            out.extend(self.law.convolution_row(i, cap));
        }
    }

    /// Adds `weight · p_{il}` to `out[l]` for `l < out.len()`.
    pub fn add_row(&self, i: usize, weight: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        let cap = out.len() - 1;
        if i <= self.cap && cap <= self.cap {
            for (o, p) in out.iter_mut().zip(&self.rows()[i]) {
                *o += weight * p;
            }
        } else {
            for (o, p) in out.iter_mut().zip(self.law.convolution_row(i, cap)) {
                *o += weight * p;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn laws() -> Vec<OffspringLaw> {
        vec![
            OffspringLaw::PointMass { at: 1 },
            OffspringLaw::PointMass { at: 2 },
            OffspringLaw::Poisson { mean: 0.8 },
            OffspringLaw::Geometric { p: 0.6 },
            OffspringLaw::Table {
                probs: vec![0.3, 0.5, 0.2],
            },
        ]
    }

    /// Exact i-fold convolution by repeated discrete convolution of the
    /// single-draw pmf, independent of the closed forms used above.
    fn brute_convolution(law: &OffspringLaw, i: usize, cap: usize) -> Vec<f64> {
        let base = law.convolution_row(1, cap);
        let mut acc = vec![0.0; cap + 1];
        acc[0] = 1.0;
        for _ in 0..i {
            let mut next = vec![0.0; cap + 1];
            for a in 0..=cap {
                for b in 0..=cap - a {
                    next[a + b] += acc[a] * base[b];
                }
            }
            acc = next;
        }
        acc
    }

    #[test]
    fn rows_match_brute_convolution() {
        for law in laws() {
            for i in 0..6 {
                let row = law.convolution_row(i, 40);
                let brute = brute_convolution(&law, i, 40);
                for l in 0..=40 {
                    assert_abs_diff_eq!(row[l], brute[l], epsilon = 1e-12);
                }
                assert_abs_diff_eq!(row[0], law.zero_prob(i), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn mean_identity_holds_for_every_family() {
        for law in laws() {
            let theta = law.mean();
            for i in 0..8 {
                let row = law.convolution_row(i, 200);
                let lhs: f64 = row.iter().enumerate().map(|(l, p)| (l as f64 + 1.0) * p).sum();
                assert_abs_diff_eq!(lhs, i as f64 * theta + 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn point_mass_convolution_is_deterministic() {
        let law = OffspringLaw::PointMass { at: 1 };
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            assert_eq!(law.sample_sum(2, &mut rng), 2);
        }
    }

    #[test]
    fn table_validation() {
        assert!(OffspringLaw::Table { probs: vec![0.5, 0.4] }.validate().is_err());
        assert!(OffspringLaw::Poisson { mean: -1.0 }.validate().is_err());
        assert!(OffspringLaw::Geometric { p: 0.0 }.validate().is_err());
        assert!(laws().iter().all(|l| l.validate().is_ok()));
    }

    fn chi_square_pvalue(law: &OffspringLaw, i: usize, draws: usize, seed: u64) -> f64 {
        let cap = 60;
        let expected = brute_convolution(law, i, cap);
        let mut rng = rng_from_seed(seed);
        let mut counts = vec![0usize; cap + 2];
        for _ in 0..draws {
            let k = law.sample_sum(i, &mut rng).min(cap + 1);
            counts[k] += 1;
        }
        // pool cells with expected count < 5 into their neighbours
        let mut cells: Vec<(f64, f64)> = Vec::new();
        let (mut e_acc, mut o_acc) = (0.0, 0.0);
        let tail = 1.0 - expected.iter().sum::<f64>();
        for k in 0..=cap + 1 {
            let e = if k <= cap { expected[k] } else { tail.max(0.0) } * draws as f64;
            e_acc += e;
            o_acc += counts[k] as f64;
            if e_acc >= 5.0 {
                cells.push((o_acc, e_acc));
                e_acc = 0.0;
                o_acc = 0.0;
            }
        }
        if let Some(last) = cells.last_mut() {
            last.0 += o_acc;
            last.1 += e_acc;
        }
        let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
        let dof = (cells.len() - 1) as f64;
        1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
    }

    #[test]
    fn convolution_samplers_pass_chi_square() {
        for (k, law) in laws().iter().enumerate() {
            if matches!(law, OffspringLaw::PointMass { .. }) {
                continue;
            }
            let p = chi_square_pvalue(law, 3, 10_000, 100 + k as u64);
            assert!(p > 0.01, "{law:?}: p = {p}");
        }
    }

    #[test]
    fn table_cache_matches_direct_rows() {
        let t = ConvolutionTable::new(OffspringLaw::Poisson { mean: 0.8 }, 30);
        assert_abs_diff_eq!(t.prob(3, 2), OffspringLaw::Poisson { mean: 0.8 }.convolution_row(3, 2)[2]);
        // beyond the cache
        assert_abs_diff_eq!(
            t.prob(40, 35),
            OffspringLaw::Poisson { mean: 0.8 }.convolution_row(40, 35)[35],
            epsilon = 1e-15
        );
        let mut out = vec![0.0; 5];
        t.add_row(2, 2.0, &mut out);
        assert_abs_diff_eq!(out[1], 2.0 * t.prob(2, 1), epsilon = 1e-15);
    }
}
