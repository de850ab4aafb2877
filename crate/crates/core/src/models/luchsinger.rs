//! Infection by contact with a fixed population (nonlinear) and with an
//! infinite pool of susceptibles (linear).

use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::Deserialize;

use super::offspring::{ConvolutionTable, OffspringLaw};
use crate::error::ModelError;
use crate::rates::baseline::{BaselineGenerator, LoadDecay};
use crate::rates::interaction::{pos, Envelope, Envelopes, Interaction, ModelSpec};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LuchsingerParams {
    pub lambda: f64,
    pub mu: f64,
    #[serde(default)]
    pub kappa: f64,
    pub offspring: OffspringLaw,
}

impl LuchsingerParams {
    fn validate(&self) -> Result<(), ModelError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "kappa must be nonnegative, got {}",
                self.kappa
            )));
        }
        self.offspring.validate()
    }

    fn m1(&self) -> f64 {
        (self.mu + self.kappa).max(1.0)
    }
}

/// Draws a source load `i ≥ 1` with probability proportional to
/// `x₊ⁱ (1 − p_{i0})`. `total` is the sum of those weights.
fn sample_source(x: &[f64], table: &ConvolutionTable, total: f64, rng: &mut dyn RngCore) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &xi) in x.iter().enumerate().skip(1) {
        let w = pos(xi) * (1.0 - table.zero_prob(i));
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn infectious_weight(x: &[f64], table: &ConvolutionTable) -> f64 {
    x.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &xi)| pos(xi) * (1.0 - table.zero_prob(i)))
        .sum()
}

/// `Σ_{i≥1} x₊ⁱ (iθ + 1 − p_{i0})`, the `(l+1)`-weighted offspring mass.
fn weighted_offspring(x: &[f64], table: &ConvolutionTable, theta: f64) -> f64 {
    x.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &xi)| pos(xi) * (i as f64 * theta + 1.0 - table.zero_prob(i)))
        .sum()
}

/// Fills `out[l] = Σ_{i≥1} x₊ⁱ p_{il}` for `1 ≤ l ≤ cap`, `out[0] = 0`.
fn offspring_row(x: &[f64], table: &ConvolutionTable, cap: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(cap + 1, 0.0);
    for (i, &xi) in x.iter().enumerate().skip(1) {
        let xi = pos(xi);
        if xi > 0.0 {
            table.add_row(i, xi, out);
        }
    }
    out[0] = 0.0;
}

/// Only uninfected hosts are infected: `α₀ₗ(x) = λ Σ_{i≥1} xⁱ p_{il}`.
#[derive(Debug)]
pub struct LuchsingerNonlinear {
    lambda: f64,
    theta: f64,
    table: ConvolutionTable,
}

impl LuchsingerNonlinear {
    pub fn new(lambda: f64, law: OffspringLaw) -> Self {
        Self {
            lambda,
            theta: law.mean(),
            table: ConvolutionTable::new(law, ConvolutionTable::DEFAULT_CAP),
        }
    }
}

impl Interaction for LuchsingerNonlinear {
    fn alpha_total(&self, load: usize, x: &[f64]) -> f64 {
        if load != 0 {
            return 0.0;
        }
        self.lambda * infectious_weight(x, &self.table)
    }

    fn alpha_sample(&self, load: usize, x: &[f64], rng: &mut dyn RngCore) -> usize {
        debug_assert_eq!(load, 0);
        let total = infectious_weight(x, &self.table);
        let source = sample_source(x, &self.table, total, rng);
        self.table.law().sample_positive_sum(source, rng)
    }

    fn alpha_pointwise(&self, load: usize, target: usize, x: &[f64]) -> f64 {
        if load != 0 || target == 0 {
            return 0.0;
        }
        self.lambda
            * x.iter()
                .enumerate()
                .skip(1)
                .map(|(i, &xi)| pos(xi) * self.table.prob(i, target))
                .sum::<f64>()
    }

    fn alpha_active(&self, load: usize) -> bool {
        load == 0
    }

    fn alpha_moment(&self, load: usize, x: &[f64]) -> Option<f64> {
        Some(if load == 0 {
            self.lambda * weighted_offspring(x, &self.table, self.theta)
        } else {
            0.0
        })
    }

    fn alpha_row(&self, load: usize, x: &[f64], cap: usize, out: &mut Vec<f64>) {
        if load != 0 {
            out.clear();
            out.resize(cap + 1, 0.0);
            return;
        }
        offspring_row(x, &self.table, cap, out);
        for v in out.iter_mut() {
            *v *= self.lambda;
        }
    }

    fn envelopes(&self) -> Envelopes {
        Envelopes {
            a01: Envelope::Constant(self.lambda),
            a11: Envelope::Constant(self.lambda * self.theta.max(1.0)),
            ..Envelopes::ZERO
        }
    }
}

/// Immigration of newly infected hosts: `βᵢ(x) = λ Σ_{l≥1} xˡ p_{li}`, `i ≥ 1`.
#[derive(Debug)]
pub struct LuchsingerLinear {
    lambda: f64,
    theta: f64,
    table: ConvolutionTable,
}

impl LuchsingerLinear {
    pub fn new(lambda: f64, law: OffspringLaw) -> Self {
        Self {
            lambda,
            theta: law.mean(),
            table: ConvolutionTable::new(law, ConvolutionTable::DEFAULT_CAP),
        }
    }
}

impl Interaction for LuchsingerLinear {
    fn alpha_total(&self, _load: usize, _x: &[f64]) -> f64 {
        0.0
    }

    fn alpha_sample(&self, _load: usize, _x: &[f64], _rng: &mut dyn RngCore) -> usize {
        unreachable!("the linear model has no interaction moves")
    }

    fn alpha_pointwise(&self, _load: usize, _target: usize, _x: &[f64]) -> f64 {
        0.0
    }

    fn alpha_active(&self, _load: usize) -> bool {
        false
    }

    fn alpha_moment(&self, _load: usize, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }

    fn beta_total(&self, x: &[f64]) -> f64 {
        self.lambda * infectious_weight(x, &self.table)
    }

    fn beta_sample(&self, x: &[f64], rng: &mut dyn RngCore) -> usize {
        let total = infectious_weight(x, &self.table);
        let source = sample_source(x, &self.table, total, rng);
        self.table.law().sample_positive_sum(source, rng)
    }

    fn beta_pointwise(&self, load: usize, x: &[f64]) -> f64 {
        if load == 0 {
            return 0.0;
        }
        self.lambda
            * x.iter()
                .enumerate()
                .skip(1)
                .map(|(l, &xl)| pos(xl) * self.table.prob(l, load))
                .sum::<f64>()
    }

    fn beta_moment(&self, x: &[f64]) -> Option<f64> {
        Some(self.lambda * weighted_offspring(x, &self.table, self.theta))
    }

    fn beta_row(&self, x: &[f64], cap: usize, out: &mut Vec<f64>) {
        offspring_row(x, &self.table, cap, out);
        for v in out.iter_mut() {
            *v *= self.lambda;
        }
    }

    fn has_immigration(&self) -> bool {
        true
    }

    fn envelopes(&self) -> Envelopes {
        Envelopes {
            b01: Envelope::Constant(self.lambda),
            b11: Envelope::Constant(self.lambda * self.theta.max(1.0)),
            ..Envelopes::ZERO
        }
    }
}

/// Fixed population; parasites die at `μ` each; hosts are replaced by
/// healthy ones at rate `κ`; uninfected hosts are infected by contact.
pub fn luchsinger_nonlinear(params: &serde_json::Value) -> Result<ModelSpec, ModelError> {
    let p: LuchsingerParams = super::parse_params(params)?;
    p.validate()?;
    let baseline = LoadDecay {
        mu: p.mu,
        decay_floor: 1,
        catastrophe: p.kappa,
        host_death: 0.0,
        host_death_per_load: 0.0,
        host_death_floor: 0,
    };
    let baseline = BaselineGenerator::new(Arc::new(baseline), p.m1(), 1.0, 0.0)?;
    Ok(ModelSpec::new(
        "luchsinger_nonlinear",
        params.clone(),
        baseline,
        Arc::new(LuchsingerNonlinear::new(p.lambda, p.offspring)),
    ))
}

/// Infected hosts only; new infections arrive from an unlimited pool.
pub fn luchsinger_linear(params: &serde_json::Value) -> Result<ModelSpec, ModelError> {
    let p: LuchsingerParams = super::parse_params(params)?;
    p.validate()?;
    let baseline = LoadDecay {
        mu: p.mu,
        decay_floor: 2,
        catastrophe: 0.0,
        host_death: p.kappa,
        host_death_per_load: 0.0,
        host_death_floor: 1,
    };
    let baseline = BaselineGenerator::new(Arc::new(baseline), p.m1(), 1.0, 0.0)?;
    Ok(ModelSpec::new(
        "luchsinger_linear",
        params.clone(),
        baseline,
        Arc::new(LuchsingerLinear::new(p.lambda, p.offspring)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use serde_json::json;

    fn nonlinear(theta: f64) -> ModelSpec {
        luchsinger_nonlinear(&json!({
            "lambda": 1.0, "mu": 1.0, "kappa": 1.0,
            "offspring": {"family": "poisson", "mean": theta}
        }))
        .unwrap()
    }

    #[test]
    fn point_mass_offspring_copies_the_source_load() {
        let m = luchsinger_nonlinear(&json!({
            "lambda": 0.5, "mu": 1.0, "kappa": 0.5,
            "offspring": {"family": "point_mass", "at": 1}
        }))
        .unwrap();
        let x = [0.0, 0.0, 1.0];
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            assert_eq!(m.interaction().alpha_sample(0, &x, &mut rng), 2);
        }
        assert_abs_diff_eq!(m.interaction().alpha_total(0, &x), 0.5);
    }

    #[test]
    fn totals_match_pointwise_sums() {
        let m = nonlinear(0.8);
        let x = [0.5, 0.2, 0.2, 0.1];
        let inter = m.interaction();
        let sum: f64 = (1..200).map(|l| inter.alpha_pointwise(0, l, &x)).sum();
        assert_abs_diff_eq!(sum, inter.alpha_total(0, &x), epsilon = 1e-12);
        let moment: f64 = (1..200)
            .map(|l| (l as f64 + 1.0) * inter.alpha_pointwise(0, l, &x))
            .sum();
        assert_abs_diff_eq!(moment, inter.alpha_moment(0, &x).unwrap(), epsilon = 1e-12);
        assert_eq!(inter.alpha_total(1, &x), 0.0);
    }

    #[test]
    fn nonlinear_drift_conserves_hosts() {
        let m = nonlinear(0.8);
        let x = [0.6, 0.2, 0.1, 0.1];
        let mut out = vec![0.0; 120];
        m.interaction().add_drift(&x, &mut out);
        assert_abs_diff_eq!(out.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn envelope_constants_follow_the_mean() {
        let e = nonlinear(2.0).envelopes();
        assert_eq!(e.a01.eval(5.0), 1.0);
        assert_eq!(e.a11.eval(5.0), 2.0);
        assert_eq!(nonlinear(0.5).envelopes().a11.eval(0.0), 1.0);
        assert_eq!(nonlinear(0.8).baseline().m1(), 2.0);
    }

    #[test]
    fn linear_model_immigration() {
        let m = luchsinger_linear(&json!({
            "lambda": 2.0, "mu": 1.0, "kappa": 0.1,
            "offspring": {"family": "point_mass", "at": 1}
        }))
        .unwrap();
        let inter = m.interaction();
        assert_eq!(inter.beta_total(&[0.0, 0.0]), 0.0);
        let x = [0.0, 1.0];
        assert_abs_diff_eq!(inter.beta_total(&x), 2.0);
        let mut rng = rng_from_seed(9);
        assert_eq!(inter.beta_sample(&x, &mut rng), 1);
        assert_eq!(m.baseline().death(1), 1.1);
        assert_eq!(m.baseline().death(3), 0.1);
        assert_eq!(m.baseline().exit_rate(3), 3.1);
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = json!({"lambda": 0.0, "mu": 1.0, "offspring": {"family": "poisson", "mean": 1.0}});
        assert!(luchsinger_nonlinear(&bad).is_err());
        let unknown = json!({"lambda": 1.0, "mu": 1.0, "rho": 2.0,
            "offspring": {"family": "poisson", "mean": 1.0}});
        assert!(luchsinger_nonlinear(&unknown).is_err());
    }
}
