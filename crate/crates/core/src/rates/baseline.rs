//! The state-independent within-host chain: moves `i → j` at `ᾱᵢⱼ` and host
//! death at `δ̄ᵢ` (absorption in the cemetery state).

use std::fmt;
use std::sync::Arc;

use crate::error::ModelError;

/// Rates of the baseline chain for a single load.
pub trait BaselineRates: Send + Sync + fmt::Debug {
    /// Clears `out` and fills it with `(target, rate)` for every target
    /// `j ≠ i` with positive rate. The support is finite for every `i`.
    fn moves(&self, load: usize, out: &mut Vec<(usize, f64)>);

    /// Host death rate `δ̄ᵢ`.
    fn death(&self, load: usize) -> f64;

    /// `α*(i) = Σ_{j≠i} ᾱᵢⱼ`.
    fn move_total(&self, load: usize) -> f64 {
        let mut buf = Vec::new();
        self.moves(load, &mut buf);
        buf.iter().map(|m| m.1).sum()
    }

    /// Largest load reachable in one baseline move from `load`.
    fn max_target(&self, load: usize) -> usize {
        let mut buf = Vec::new();
        self.moves(load, &mut buf);
        buf.iter().map(|m| m.0).max().unwrap_or(load).max(load)
    }
}

/// Baseline generator together with its declared growth constants.
#[derive(Clone, Debug)]
pub struct BaselineGenerator {
    rates: Arc<dyn BaselineRates>,
    m1: f64,
    m2: f64,
    w: f64,
}

impl BaselineGenerator {
    /// `m1, m2 ≥ 1` bound `α*(i) + δ̄ᵢ ≤ m1 (i+1)^m2`; `w ≥ 0` bounds the
    /// growth of `E⁰ᵢ(W(t)+1) ≤ (i+1) e^{wt}`.
    pub fn new(rates: Arc<dyn BaselineRates>, m1: f64, m2: f64, w: f64) -> Result<Self, ModelError> {
        if !(m1 >= 1.0 && m1.is_finite()) || !(m2 >= 1.0 && m2.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "growth constants must satisfy 1 <= m1, m2 < inf (got m1={m1}, m2={m2})"
            )));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(ModelError::InvalidParameter(format!("drift w must be >= 0, got {w}")));
        }
        Ok(Self { rates, m1, m2, w })
    }

    /// Baseline with no moves and no deaths.
    pub fn null() -> Self {
        Self {
            rates: Arc::new(NullBaseline),
            m1: 1.0,
            m2: 1.0,
            w: 0.0,
        }
    }

    pub fn rates(&self) -> &dyn BaselineRates {
        self.rates.as_ref()
    }

    pub fn moves(&self, load: usize, out: &mut Vec<(usize, f64)>) {
        self.rates.moves(load, out)
    }

    pub fn death(&self, load: usize) -> f64 {
        self.rates.death(load)
    }

    /// Total exit rate `α*(i) + δ̄ᵢ`.
    pub fn exit_rate(&self, load: usize) -> f64 {
        self.rates.move_total(load) + self.rates.death(load)
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    /// Growth envelope `m1 (i+1)^m2`.
    pub fn growth_bound(&self, load: usize) -> f64 {
        self.m1 * (load as f64 + 1.0).powf(self.m2)
    }
}

/// Generator of the baseline chain restricted to loads `0..=j`, as a dense
/// `(j+1) × (j+1)` matrix. Diagonals carry the full exit rate, so moves
/// beyond `j` and deaths both appear as row-sum deficits.
pub fn truncated_generator(baseline: &BaselineGenerator, j: usize) -> nalgebra::DMatrix<f64> {
    let mut q = nalgebra::DMatrix::zeros(j + 1, j + 1);
    let mut moves = Vec::new();
    for i in 0..=j {
        baseline.moves(i, &mut moves);
        let mut exit = baseline.death(i);
        for &(t, r) in &moves {
            exit += r;
            if t <= j {
                q[(i, t)] += r;
            }
        }
        q[(i, i)] -= exit;
    }
    q
}

#[derive(Debug, Clone, Copy)]
pub struct NullBaseline;

impl BaselineRates for NullBaseline {
    fn moves(&self, _load: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
    }

    fn death(&self, _load: usize) -> f64 {
        0.0
    }

    fn move_total(&self, _load: usize) -> f64 {
        0.0
    }
}

/// Linear parasite death, catastrophes to load 0 and load-dependent host death.
///
/// * loads `i ≥ decay_floor` move to `i-1` at rate `i μ`;
/// * loads `1 ≤ i < decay_floor` lose their last parasites by host death
///   instead, adding `i μ` to `δ̄ᵢ`;
/// * loads `i ≥ 1` jump to 0 at rate `catastrophe` (merged with the decay
///   move when `i = 1`);
/// * loads `i ≥ host_death_floor` die at `host_death + i · host_death_per_load`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadDecay {
    pub mu: f64,
    pub decay_floor: usize,
    pub catastrophe: f64,
    pub host_death: f64,
    pub host_death_per_load: f64,
    pub host_death_floor: usize,
}

impl LoadDecay {
    /// Pure linear death `i → i-1` at `iμ`.
    pub fn pure_death(mu: f64) -> Self {
        Self {
            mu,
            decay_floor: 1,
            catastrophe: 0.0,
            host_death: 0.0,
            host_death_per_load: 0.0,
            host_death_floor: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [self.mu, self.catastrophe, self.host_death, self.host_death_per_load];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ModelError::InvalidParameter(format!(
                "baseline rates must be finite and nonnegative: {self:?}"
            )));
        }
        if self.decay_floor == 0 {
            return Err(ModelError::InvalidParameter("decay_floor must be >= 1".into()));
        }
        Ok(())
    }
}

impl BaselineRates for LoadDecay {
    fn moves(&self, load: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if load == 0 {
            return;
        }
        let decay = if load >= self.decay_floor {
            load as f64 * self.mu
        } else {
            0.0
        };
        if load == 1 {
            let r = decay + self.catastrophe;
            if r > 0.0 {
                out.push((0, r));
            }
            return;
        }
        if decay > 0.0 {
            out.push((load - 1, decay));
        }
        if self.catastrophe > 0.0 {
            out.push((0, self.catastrophe));
        }
    }

    fn death(&self, load: usize) -> f64 {
        let mut rate = 0.0;
        if load >= 1 && load < self.decay_floor {
            rate += load as f64 * self.mu;
        }
        if load >= self.host_death_floor {
            rate += self.host_death + load as f64 * self.host_death_per_load;
        }
        rate
    }

    fn move_total(&self, load: usize) -> f64 {
        if load == 0 {
            return 0.0;
        }
        let decay = if load >= self.decay_floor {
            load as f64 * self.mu
        } else {
            0.0
        };
        decay + self.catastrophe
    }

    fn max_target(&self, load: usize) -> usize {
        load
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_with_catastrophe_merges_at_one() {
        let b = LoadDecay {
            mu: 1.5,
            decay_floor: 1,
            catastrophe: 0.5,
            host_death: 0.0,
            host_death_per_load: 0.0,
            host_death_floor: 0,
        };
        let mut out = Vec::new();
        b.moves(1, &mut out);
        assert_eq!(out, vec![(0, 2.0)]);
        b.moves(3, &mut out);
        assert_eq!(out, vec![(2, 4.5), (0, 0.5)]);
        b.moves(0, &mut out);
        assert!(out.is_empty());
        assert_eq!(b.move_total(3), 5.0);
        assert_eq!(b.death(3), 0.0);
    }

    #[test]
    fn decay_floor_two_turns_last_loss_into_death() {
        let b = LoadDecay {
            mu: 1.0,
            decay_floor: 2,
            catastrophe: 0.0,
            host_death: 0.25,
            host_death_per_load: 0.0,
            host_death_floor: 1,
        };
        let mut out = Vec::new();
        b.moves(1, &mut out);
        assert!(out.is_empty());
        assert_eq!(b.death(1), 1.25);
        assert_eq!(b.death(2), 0.25);
        assert_eq!(b.death(0), 0.0);
        b.moves(2, &mut out);
        assert_eq!(out, vec![(1, 2.0)]);
    }

    #[test]
    fn move_total_matches_listed_moves() {
        let b = LoadDecay {
            mu: 0.7,
            decay_floor: 1,
            catastrophe: 0.3,
            host_death: 0.1,
            host_death_per_load: 0.2,
            host_death_floor: 0,
        };
        let mut out = Vec::new();
        for i in 0..50 {
            b.moves(i, &mut out);
            let listed: f64 = out.iter().map(|m| m.1).sum();
            assert!((listed - b.move_total(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_rejects_bad_growth_constants() {
        let rates = Arc::new(LoadDecay::pure_death(1.0));
        assert!(BaselineGenerator::new(rates.clone(), 0.5, 1.0, 0.0).is_err());
        assert!(BaselineGenerator::new(rates.clone(), 1.0, 1.0, -1.0).is_err());
        assert!(BaselineGenerator::new(rates, 1.0, 1.0, 0.0).is_ok());
    }
}
