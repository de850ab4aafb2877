//! Brute-force transient analysis of tiny instances, for tests only.
//!
//! The joint chain is enumerated breadth-first from the pointwise rate
//! evaluators of a model (never through the simulator's channel or sampling
//! code) and solved with nalgebra's dense matrix exponential.

use std::collections::{HashMap, VecDeque};

use hostpar_core::{ModelSpec, PopulationState};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("more than {cap} reachable states")]
    StateCapExceeded { cap: usize },
    #[error("overflow mass {overflow} exceeds budget {budget}")]
    OverflowBudget { overflow: f64, budget: f64 },
    #[error("invalid oracle input: {0}")]
    InvalidInput(String),
}

/// Enumeration limits. Transitions to loads above `load_cap` or to
/// populations above `host_cap` go to the overflow state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainCaps {
    pub load_cap: usize,
    pub state_cap: usize,
    pub host_cap: u64,
}

impl ChainCaps {
    pub fn new(load_cap: usize, state_cap: usize, host_cap: u64) -> Self {
        Self {
            load_cap,
            state_cap,
            host_cap,
        }
    }
}

/// Reachable joint states with the dense generator. The last index is the
/// absorbing overflow state.
#[derive(Clone, Debug)]
pub struct EnumeratedChain {
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    generator: DMatrix<f64>,
    load_cap: usize,
}

impl EnumeratedChain {
    /// Number of states including overflow.
    pub fn len(&self) -> usize {
        self.states.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overflow_index(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        let mut key = counts.to_vec();
        key.resize(self.load_cap + 1, 0);
        self.index.get(&key).copied()
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn load_cap(&self) -> usize {
        self.load_cap
    }
}

fn add_rate(rows: &mut Vec<(usize, usize, f64)>, from: usize, to: usize, rate: f64) {
    if rate > 0.0 && from != to {
        rows.push((from, to, rate));
    }
}

/// Enumerates every state reachable from `ξ₀` under all rate families.
pub fn enumerate_chain(
    model: &ModelSpec,
    xi0: &PopulationState,
    n: u64,
    caps: ChainCaps,
) -> Result<EnumeratedChain, OracleError> {
    if n == 0 {
        return Err(OracleError::InvalidInput("N must be >= 1".into()));
    }
    if xi0.max_load().is_some_and(|m| m > caps.load_cap) {
        return Err(OracleError::InvalidInput("initial state exceeds the load cap".into()));
    }
    let width = caps.load_cap + 1;
    let mut start: Vec<u32> = xi0.to_dense().iter().map(|&c| c as u32).collect();
    start.resize(width, 0);

    let baseline = model.baseline();
    let inter = model.interaction();
    let nf = n as f64;
    let mut states: Vec<Vec<u32>> = Vec::new();
    let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    // overflow target resolved once the state count is known
    const OVERFLOW: usize = usize::MAX;
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut moves = Vec::new();

    let mut intern = |s: Vec<u32>,
                      states: &mut Vec<Vec<u32>>,
                      queue: &mut VecDeque<usize>|
     -> Result<usize, OracleError> {
        if let Some(&k) = index.get(&s) {
            return Ok(k);
        }
        if states.len() >= caps.state_cap {
            return Err(OracleError::StateCapExceeded { cap: caps.state_cap });
        }
        let k = states.len();
        index.insert(s.clone(), k);
        states.push(s);
        queue.push_back(k);
        Ok(k)
    };
    intern(start, &mut states, &mut queue)?;

    while let Some(k) = queue.pop_front() {
        let s = states[k].clone();
        let x: Vec<f64> = s.iter().map(|&c| c as f64 / nf).collect();
        let hosts: u64 = s.iter().map(|&c| c as u64).sum();
        let mut go = |target: Option<Vec<u32>>,
                      rate: f64,
                      states: &mut Vec<Vec<u32>>,
                      queue: &mut VecDeque<usize>|
         -> Result<(), OracleError> {
            if rate <= 0.0 {
                return Ok(());
            }
            match target {
                Some(t) => {
                    let j = intern(t, states, queue)?;
                    add_rate(&mut edges, k, j, rate);
                }
                None => edges.push((k, OVERFLOW, rate)),
            }
            Ok(())
        };
        let shift = |from: Option<usize>, to: Option<usize>| -> Option<Vec<u32>> {
            let mut t = s.clone();
            if let Some(i) = from {
                t[i] -= 1;
            }
            if let Some(l) = to {
                if l > caps.load_cap {
                    return None;
                }
                t[l] += 1;
            }
            Some(t)
        };

        for i in 0..width {
            let c = s[i] as f64;
            if c == 0.0 {
                continue;
            }
            baseline.moves(i, &mut moves);
            for &(l, r) in &moves {
                go(shift(Some(i), Some(l)), c * r, &mut states, &mut queue)?;
            }
            go(shift(Some(i), None), c * baseline.death(i), &mut states, &mut queue)?;
            go(shift(Some(i), None), c * inter.delta(i, &x), &mut states, &mut queue)?;
            let total = inter.alpha_total(i, &x);
            if total > 0.0 {
                let mut inside = 0.0;
                for l in (0..=caps.load_cap).filter(|&l| l != i) {
                    let r = inter.alpha_pointwise(i, l, &x);
                    inside += r;
                    go(shift(Some(i), Some(l)), c * r, &mut states, &mut queue)?;
                }
                let rest = total - inside;
                if rest > 1e-14 * total {
                    go(None, c * rest, &mut states, &mut queue)?;
                }
            }
        }
        let total = inter.beta_total(&x);
        if total > 0.0 {
            if hosts >= caps.host_cap {
                go(None, nf * total, &mut states, &mut queue)?;
            } else {
                let mut inside = 0.0;
                for l in 0..=caps.load_cap {
                    let r = inter.beta_pointwise(l, &x);
                    inside += r;
                    go(shift(None, Some(l)), nf * r, &mut states, &mut queue)?;
                }
                let rest = total - inside;
                if rest > 1e-14 * total {
                    go(None, nf * rest, &mut states, &mut queue)?;
                }
            }
        }
    }

    let m = states.len() + 1;
    let mut q = DMatrix::<f64>::zeros(m, m);
    for (a, b, r) in edges {
        let b = if b == OVERFLOW { m - 1 } else { b };
        q[(a, b)] += r;
        q[(a, a)] -= r;
    }
    Ok(EnumeratedChain {
        states,
        index,
        generator: q,
        load_cap: caps.load_cap,
    })
}

/// Expected counts by load at time `t` from the initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct TransientMoments {
    pub time: f64,
    pub means: Vec<f64>,
    /// Probability of having left the caps by `t`.
    pub overflow: f64,
    /// Total probability over all states including overflow.
    pub mass: f64,
}

/// Row of `exp(Qt)` for the initial state folded to per-load expectations.
/// Fails when the overflow probability exceeds `budget`.
pub fn transient_moments(
    chain: &EnumeratedChain,
    t: f64,
    budget: f64,
) -> Result<TransientMoments, OracleError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(OracleError::InvalidInput(format!("bad time {t}")));
    }
    let p = (chain.generator() * t).exp();
    let row = p.row(0);
    let mut means = vec![0.0; chain.load_cap + 1];
    for (k, s) in chain.states.iter().enumerate() {
        for (l, &c) in s.iter().enumerate() {
            means[l] += row[k] * c as f64;
        }
    }
    let overflow = row[chain.overflow_index()];
    let mass = row.iter().sum();
    if overflow > budget {
        return Err(OracleError::OverflowBudget { overflow, budget });
    }
    Ok(TransientMoments {
        time: t,
        means,
        overflow,
        mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hostpar_core::models::{luchsinger_nonlinear, null_model, pure_death};
    use serde_json::json;

    #[test]
    fn pure_death_single_host() {
        let m = pure_death(&json!({"mu": 1.0})).unwrap();
        let s = PopulationState::from_pairs([(1, 1)]);
        let chain = enumerate_chain(&m, &s, 1, ChainCaps::new(1, 10, 1)).unwrap();
        assert_eq!(chain.states().len(), 2);
        let q = chain.generator();
        assert_eq!(q[(0, 1)], 1.0);
        assert_eq!(q[(0, chain.overflow_index())], 0.0);
        let r = transient_moments(&chain, 1.0, 0.0).unwrap();
        assert!((r.means[1] - (-1f64).exp()).abs() < 1e-12);
        assert!((r.mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn empty_model_is_frozen() {
        let m = null_model(&json!(null)).unwrap();
        let s = PopulationState::from_pairs([(0, 2), (1, 1)]);
        let chain = enumerate_chain(&m, &s, 3, ChainCaps::new(2, 10, 3)).unwrap();
        assert_eq!(chain.states().len(), 1);
        assert!(chain.generator().iter().all(|v| *v == 0.0));
        let r = transient_moments(&chain, 0.0, 0.0).unwrap();
        assert_eq!(r.means, vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn two_host_hand_generator() {
        // point-mass offspring: an infected host at load i infects to load i
        let m = luchsinger_nonlinear(&json!({
            "lambda": 0.5, "mu": 1.0, "kappa": 0.5,
            "offspring": {"family": "point_mass", "at": 1}
        }))
        .unwrap();
        let s = PopulationState::from_pairs([(0, 1), (2, 1)]);
        let chain = enumerate_chain(&m, &s, 2, ChainCaps::new(2, 100, 2)).unwrap();
        // {0,2}, {1,0}+... : all multisets of 2 hosts on loads {0,1,2} = 6
        assert!(chain.states().len() <= 6);
        let q = chain.generator();
        let from = chain.index_of(&[1, 0, 1]).unwrap();
        // 2 → 1 at 2μ, 2 → 0 at κ, 0 → 2 at λ·x² = 0.5·0.5
        let to_01 = chain.index_of(&[1, 1, 0]).unwrap();
        let to_00 = chain.index_of(&[2, 0, 0]).unwrap();
        let to_22 = chain.index_of(&[0, 0, 2]).unwrap();
        assert!((q[(from, to_01)] - 2.0).abs() < 1e-15);
        assert!((q[(from, to_00)] - 0.5).abs() < 1e-15);
        assert!((q[(from, to_22)] - 0.25).abs() < 1e-15);
        assert!((q[(from, from)] + 2.75).abs() < 1e-15);
        for r in 0..chain.len() {
            let sum: f64 = q.row(r).iter().sum();
            assert!(sum.abs() < 1e-12);
            assert!(q.row(r).iter().enumerate().all(|(c, v)| c == r || *v >= 0.0));
        }
    }

    #[test]
    fn state_cap_is_enforced() {
        let m = luchsinger_nonlinear(&json!({
            "lambda": 0.5, "mu": 1.0, "kappa": 0.5,
            "offspring": {"family": "point_mass", "at": 1}
        }))
        .unwrap();
        let s = PopulationState::from_pairs([(0, 2), (2, 2)]);
        assert!(matches!(
            enumerate_chain(&m, &s, 4, ChainCaps::new(2, 3, 4)),
            Err(OracleError::StateCapExceeded { cap: 3 })
        ));
    }
}
