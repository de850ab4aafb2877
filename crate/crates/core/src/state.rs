//! Population states, density vectors and the two norms used throughout.
//!
//! A [`PopulationState`] holds integer host counts indexed by parasite load
//! and is stored sparsely. A [`DensityVector`] is a dense, truncated real
//! vector over loads `0..=J`; it is what the ODE integrates and what every
//! rate evaluator receives as its density argument.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::StateError;

/// Integer host counts by parasite load, finite support.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PopulationState {
    counts: BTreeMap<usize, u64>,
    total_hosts: u64,
}

impl PopulationState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a state from `(load, count)` pairs; zero counts are dropped and
    /// repeated loads accumulate.
    pub fn from_pairs<I: IntoIterator<Item = (usize, u64)>>(pairs: I) -> Self {
        let mut state = Self::new();
        for (load, count) in pairs {
            state.add(load, count);
        }
        state
    }

    /// Builds a state from a dense count vector indexed by load.
    pub fn from_dense(counts: &[u64]) -> Self {
        Self::from_pairs(counts.iter().copied().enumerate())
    }

    pub fn count(&self, load: usize) -> u64 {
        self.counts.get(&load).copied().unwrap_or(0)
    }

    pub fn total_hosts(&self) -> u64 {
        self.total_hosts
    }

    pub fn is_empty(&self) -> bool {
        self.total_hosts == 0
    }

    /// Largest occupied load, if any.
    pub fn max_load(&self) -> Option<usize> {
        self.counts.keys().next_back().copied()
    }

    /// Occupied `(load, count)` pairs in ascending load order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().map(|(&l, &c)| (l, c))
    }

    pub fn add(&mut self, load: usize, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(load).or_insert(0) += count;
        self.total_hosts += count;
    }

    /// Removes `count` hosts from `load`.
    pub fn remove(&mut self, load: usize, count: u64) -> Result<(), StateError> {
        if count == 0 {
            return Ok(());
        }
        let present = self.count(load);
        if present < count {
            return Err(StateError::Underflow {
                load,
                present,
                requested: count,
            });
        }
        if present == count {
            self.counts.remove(&load);
        } else {
            self.counts.insert(load, present - count);
        }
        self.total_hosts -= count;
        Ok(())
    }

    /// Dense count vector of length `max_load + 1` (empty for the empty state).
    pub fn to_dense(&self) -> Vec<u64> {
        let len = self.max_load().map_or(0, |m| m + 1);
        let mut out = vec![0; len];
        for (l, c) in self.iter() {
            out[l] = c;
        }
        out
    }

    /// `ξ / N` as a density vector truncated at the largest occupied load.
    pub fn scale(&self, n: u64) -> Result<DensityVector, StateError> {
        if n == 0 {
            return Err(StateError::ZeroScale);
        }
        let inv = 1.0 / n as f64;
        let values = self.to_dense().into_iter().map(|c| c as f64 * inv).collect();
        Ok(DensityVector::from_values(values))
    }
}

/// Dense truncated real vector over loads `0..=J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityVector {
    values: Vec<f64>,
    /// `(J+1) * Σ_{i>J} mass` recorded when the vector came from truncation.
    tail_mass_estimate: f64,
}

impl DensityVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            tail_mass_estimate: 0.0,
        }
    }

    pub fn zeros(truncation: usize) -> Self {
        Self::from_values(vec![0.0; truncation + 1])
    }

    pub fn unit_mass(load: usize) -> Self {
        let mut values = vec![0.0; load + 1];
        values[load] = 1.0;
        Self::from_values(values)
    }

    pub fn with_tail_mass(mut self, tail: f64) -> Self {
        self.tail_mass_estimate = tail;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, load: usize) -> f64 {
        self.values.get(load).copied().unwrap_or(0.0)
    }

    /// Truncation level `J`; the empty vector reports 0.
    pub fn truncation(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn tail_mass_estimate(&self) -> f64 {
        self.tail_mass_estimate
    }

    /// Copy resized to truncation `j`. Mass above `j` is dropped and folded
    /// into the tail estimate.
    pub fn truncated(&self, j: usize) -> Self {
        let mut values = self.values.clone();
        let dropped: f64 = values.iter().skip(j + 1).map(|v| v.abs()).sum();
        values.resize(j + 1, 0.0);
        Self {
            values,
            tail_mass_estimate: self.tail_mass_estimate.max((j as f64 + 1.0) * dropped),
        }
    }

    /// Componentwise positive part.
    pub fn positive_part(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
            tail_mass_estimate: self.tail_mass_estimate,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// ℓ₁ and ℓ₁₁ norms.
pub trait Norms {
    /// `Σ |xⁱ|`.
    fn l1_norm(&self) -> f64;
    /// `Σ (i+1) |xⁱ|`.
    fn l11_norm(&self) -> f64;
}

impl Norms for [f64] {
    fn l1_norm(&self) -> f64 {
        self.iter().map(|v| v.abs()).sum()
    }

    fn l11_norm(&self) -> f64 {
        self.iter()
            .enumerate()
            .map(|(i, v)| (i as f64 + 1.0) * v.abs())
            .sum()
    }
}

impl Norms for DensityVector {
    fn l1_norm(&self) -> f64 {
        self.values.l1_norm()
    }

    fn l11_norm(&self) -> f64 {
        self.values.l11_norm()
    }
}

impl Norms for PopulationState {
    fn l1_norm(&self) -> f64 {
        self.total_hosts as f64
    }

    fn l11_norm(&self) -> f64 {
        self.iter().map(|(l, c)| (l as f64 + 1.0) * c as f64).sum()
    }
}

/// ℓ₁ distance between `ξ/N` and a dense density, over the union of supports.
pub fn scaled_l1_distance(state: &PopulationState, n: u64, x: &[f64]) -> f64 {
    let inv = 1.0 / n as f64;
    let mut sum = 0.0;
    let mut next = 0usize;
    for (l, c) in state.iter() {
        if l < x.len() {
            for v in &x[next..l] {
                sum += v.abs();
            }
            sum += (c as f64 * inv - x[l]).abs();
            next = l + 1;
        } else {
            sum += c as f64 * inv;
        }
    }
    if next < x.len() {
        sum += x[next..].iter().map(|v| v.abs()).sum::<f64>();
    }
    sum
}

/// Parameters of the elementary inequalities: mass bound `M ≥ 1`, size `N ≥ 9`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundM {
    m: f64,
    n: u64,
}

impl BoundM {
    pub fn new(m: f64, n: u64) -> Result<Self, StateError> {
        if !(m >= 1.0) || !m.is_finite() {
            return Err(StateError::InvalidBound(format!("M must be >= 1, got {m}")));
        }
        if n < 9 {
            return Err(StateError::InvalidBound(format!("N must be >= 9, got {n}")));
        }
        Ok(Self { m, n })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }
}

/// One `(lhs, rhs)` pair of an inequality `lhs <= rhs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sides {
    pub lhs: f64,
    pub rhs: f64,
}

impl Sides {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Both sides of the three square-root mass inequalities for a nonnegative
/// `u` with `Σ (i+1) uᵢ ≤ M`, with `I_N = {i : uᵢ ≥ 1/N}`:
///
/// 1. `Σ_{i∈I_N} √uᵢ ≤ (M+1) √(log N)`
/// 2. `Σ_{i∉I_N} uᵢ ≤ (M+1) N^{-1/2} √(log N)`
/// 3. `Σᵢ (√(N uᵢ) ∧ 2 N uᵢ) ≤ 3 (M+1) √(N log N)`
///
/// Logarithms are natural.
pub fn lemma_a1_sides(u: &[f64], bound: BoundM) -> Result<[Sides; 3], StateError> {
    if let Some((i, v)) = u.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(StateError::InvalidBound(format!(
            "entry {i} is negative or not finite: {v}"
        )));
    }
    let mass = u.l11_norm();
    if mass > bound.m {
        return Err(StateError::InvalidBound(format!(
            "l11 mass {mass} exceeds M = {}",
            bound.m
        )));
    }
    let n = bound.n as f64;
    let log_n = n.ln();
    let threshold = 1.0 / n;
    let (mut inside, mut outside, mut mixed) = (0.0, 0.0, 0.0);
    for &v in u {
        if v >= threshold {
            inside += v.sqrt();
        } else {
            outside += v;
        }
        mixed += (n * v).sqrt().min(2.0 * n * v);
    }
    let m1 = bound.m + 1.0;
    Ok([
        Sides {
            lhs: inside,
            rhs: m1 * log_n.sqrt(),
        },
        Sides {
            lhs: outside,
            rhs: m1 * log_n.sqrt() / n.sqrt(),
        },
        Sides {
            lhs: mixed,
            rhs: 3.0 * m1 * (n * log_n).sqrt(),
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn norms_of_small_vectors() {
        assert_eq!([0.0f64; 4].l1_norm(), 0.0);
        assert_eq!([1.0, 0.0, 2.0].l1_norm(), 3.0);
        assert_eq!([-1.0, 2.0].l1_norm(), 3.0);
        assert_eq!([1.0, 0.0, 2.0].l11_norm(), 7.0);
        assert_eq!(DensityVector::unit_mass(4).l11_norm(), 5.0);
        assert_eq!(DensityVector::zeros(3).l11_norm(), 0.0);
    }

    #[test]
    fn scale_divides_counts() {
        let xi = PopulationState::from_pairs([(0, 3), (2, 1)]);
        let x = xi.scale(4).unwrap();
        assert_eq!(x.values(), &[0.75, 0.0, 0.25]);
        assert_eq!(x.truncation(), 2);
        assert_eq!(x.tail_mass_estimate(), 0.0);

        let empty = PopulationState::new().scale(5).unwrap();
        assert_eq!(empty.l1_norm(), 0.0);

        let n = 17;
        let unit = PopulationState::from_pairs([(1, n)]).scale(n).unwrap();
        assert_eq!(unit.values(), &[0.0, 1.0]);

        assert!(matches!(xi.scale(0), Err(StateError::ZeroScale)));
    }

    #[test]
    fn remove_rejects_underflow() {
        let mut s = PopulationState::from_pairs([(2, 1)]);
        assert!(s.remove(2, 2).is_err());
        s.remove(2, 1).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.iter().count(), 0);
    }

    #[test]
    fn scaled_distance_covers_both_supports() {
        let s = PopulationState::from_pairs([(0, 2), (5, 2)]);
        let x = [0.5, 0.25];
        // |0.5-0.5| + |0-0.25| + |0.5-0|
        assert_abs_diff_eq!(scaled_l1_distance(&s, 4, &x), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(
            scaled_l1_distance(&PopulationState::new(), 4, &x),
            0.75,
            epsilon = 1e-15
        );
    }

    #[test]
    fn lemma_a1_edge_cases() {
        let bound = BoundM::new(1.0, 9).unwrap();
        let sides = lemma_a1_sides(&[0.0; 5], bound).unwrap();
        for s in sides {
            assert_eq!(s.lhs, 0.0);
            assert!(s.rhs > 0.0);
        }
        let sides = lemma_a1_sides(&[1.0], bound).unwrap();
        assert_eq!(sides[0].lhs, 1.0);
        assert_abs_diff_eq!(sides[0].rhs, 2.0 * 9f64.ln().sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(sides[0].rhs, 2.964, epsilon = 1e-3);

        assert!(BoundM::new(0.5, 9).is_err());
        assert!(BoundM::new(1.0, 8).is_err());
        assert!(lemma_a1_sides(&[-0.1], bound).is_err());
        assert!(lemma_a1_sides(&[0.0, 0.6], bound).is_err());
    }

    fn admissible() -> impl Strategy<Value = (Vec<f64>, f64, u64)> {
        (
            prop::collection::vec(0.0f64..1.0, 1..40),
            1.0f64..20.0,
            9u64..100_000,
            0.0f64..1.0,
        )
            .prop_map(|(raw, m, n, fill)| {
                let w = raw.l11_norm();
                let u = if w > 0.0 {
                    raw.iter().map(|v| v * fill * m / w).collect()
                } else {
                    raw
                };
                (u, m, n)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn lemma_a1_inequalities_hold((u, m, n) in admissible()) {
            let sides = lemma_a1_sides(&u, BoundM::new(m, n).unwrap()).unwrap();
            for s in sides {
                prop_assert!(s.holds(), "{s:?}");
            }
        }

        #[test]
        fn state_norm_identities(pairs in prop::collection::vec((0usize..60, 0u64..50), 0..20), n in 1u64..500) {
            let s = PopulationState::from_pairs(pairs.iter().copied());
            let total: u64 = pairs.iter().map(|p| p.1).sum();
            prop_assert_eq!(s.total_hosts(), total);
            prop_assert_eq!(s.l1_norm(), total as f64);
            prop_assert!(s.l11_norm() >= s.l1_norm());
            let x = s.scale(n).unwrap();
            let back: Vec<u64> = x.values().iter().map(|v| (v * n as f64).round() as u64).collect();
            prop_assert_eq!(PopulationState::from_dense(&back), s);
        }
    }
}
