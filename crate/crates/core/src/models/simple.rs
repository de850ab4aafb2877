//! Baseline-only and constant-rate models used for tests and sanity runs.

use std::sync::Arc;

use rand::RngCore;
use serde::Deserialize;

use crate::error::ModelError;
use crate::rates::baseline::{BaselineGenerator, LoadDecay};
use crate::rates::interaction::{Envelopes, Interaction, ModelSpec, NoInteraction};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineParams {
    #[serde(default)]
    pub mu: f64,
    #[serde(default = "one")]
    pub decay_floor: usize,
    #[serde(default)]
    pub catastrophe: f64,
    #[serde(default)]
    pub host_death: f64,
    #[serde(default)]
    pub host_death_per_load: f64,
    #[serde(default)]
    pub host_death_floor: usize,
}

fn one() -> usize {
    1
}

impl BaselineParams {
    fn generator(&self) -> Result<BaselineGenerator, ModelError> {
        let rates = LoadDecay {
            mu: self.mu,
            decay_floor: self.decay_floor,
            catastrophe: self.catastrophe,
            host_death: self.host_death,
            host_death_per_load: self.host_death_per_load,
            host_death_floor: self.host_death_floor,
        };
        rates.validate()?;
        // i(μ + per-load death) + catastrophe + host death ≤ m1 (i+1)
        let m1 = (self.mu + self.host_death_per_load)
            .max(self.catastrophe + self.host_death)
            .max(1.0);
        BaselineGenerator::new(Arc::new(rates), m1, 1.0, 0.0)
    }
}

/// No events at all.
pub fn null_model(_params: &serde_json::Value) -> Result<ModelSpec, ModelError> {
    Ok(ModelSpec::new(
        "null",
        serde_json::Value::Null,
        BaselineGenerator::null(),
        Arc::new(NoInteraction),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PureDeathParams {
    mu: f64,
}

/// Each parasite dies at rate `μ`; nothing else happens.
pub fn pure_death(params: &serde_json::Value) -> Result<ModelSpec, ModelError> {
    let p: PureDeathParams = super::parse_params(params)?;
    let rates = LoadDecay::pure_death(p.mu);
    rates.validate()?;
    let baseline = BaselineGenerator::new(Arc::new(rates), p.mu.max(1.0), 1.0, 0.0)?;
    Ok(ModelSpec::new(
        "pure_death",
        params.clone(),
        baseline,
        Arc::new(NoInteraction),
    ))
}

/// Within-host dynamics only.
pub fn baseline_only(params: &serde_json::Value) -> Result<ModelSpec, ModelError> {
    let p: BaselineParams = super::parse_params(params)?;
    Ok(ModelSpec::new(
        "baseline_only",
        params.clone(),
        p.generator()?,
        Arc::new(NoInteraction),
    ))
}

/// Interaction rates that do not depend on the density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantInteraction {
    /// Rate of `i → i+1` per host.
    pub alpha_up: f64,
    /// Total immigration rate per unit `N`.
    pub immigration: f64,
    pub immigration_load: usize,
    /// Extra death rate per host.
    pub delta: f64,
}

impl Interaction for ConstantInteraction {
    fn alpha_total(&self, _load: usize, _x: &[f64]) -> f64 {
        self.alpha_up
    }

    fn alpha_sample(&self, load: usize, _x: &[f64], _rng: &mut dyn RngCore) -> usize {
        load + 1
    }

    fn alpha_pointwise(&self, load: usize, target: usize, _x: &[f64]) -> f64 {
        if target == load + 1 {
            self.alpha_up
        } else {
            0.0
        }
    }

    fn alpha_active(&self, _load: usize) -> bool {
        self.alpha_up > 0.0
    }

    fn alpha_moment(&self, load: usize, _x: &[f64]) -> Option<f64> {
        Some((load as f64 + 2.0) * self.alpha_up)
    }

    fn beta_total(&self, _x: &[f64]) -> f64 {
        self.immigration
    }

    fn beta_sample(&self, _x: &[f64], _rng: &mut dyn RngCore) -> usize {
        self.immigration_load
    }

    fn beta_pointwise(&self, load: usize, _x: &[f64]) -> f64 {
        if load == self.immigration_load {
            self.immigration
        } else {
            0.0
        }
    }

    fn beta_moment(&self, _x: &[f64]) -> Option<f64> {
        Some((self.immigration_load as f64 + 1.0) * self.immigration)
    }

    fn has_immigration(&self) -> bool {
        self.immigration > 0.0
    }

    fn delta(&self, _load: usize, _x: &[f64]) -> f64 {
        self.delta
    }

    fn delta_active(&self, _load: usize) -> bool {
        self.delta > 0.0
    }

    fn is_state_independent(&self) -> bool {
        true
    }

    fn envelopes(&self) -> Envelopes {
        Envelopes {
            a00: self.alpha_up,
            // (i+2) α ≤ (i+1) 2α
            a10: 2.0 * self.alpha_up,
            b10: (self.immigration_load as f64 + 1.0) * self.immigration,
            d0: self.delta,
            ..Envelopes::ZERO
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    #[serde(default)]
    alpha_up: f64,
    #[serde(default)]
    immigration: f64,
    #[serde(default)]
    immigration_load: usize,
    #[serde(default)]
    delta: f64,
    #[serde(default)]
    baseline: Option<BaselineParams>,
}

/// State-independent interaction on top of an optional load-decay baseline.
pub fn constant_rates(params: &serde_json::Value) -> Result<ModelSpec, ModelError> {
    let p: ConstantParams = super::parse_params(params)?;
    let rates = [p.alpha_up, p.immigration, p.delta];
    if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(ModelError::InvalidParameter(
            "constant rates must be finite and nonnegative".into(),
        ));
    }
    let baseline = match &p.baseline {
        Some(b) => b.generator()?,
        None => BaselineGenerator::null(),
    };
    Ok(ModelSpec::new(
        "constant_rates",
        params.clone(),
        baseline,
        Arc::new(ConstantInteraction {
            alpha_up: p.alpha_up,
            immigration: p.immigration,
            immigration_load: p.immigration_load,
            delta: p.delta,
        }),
    ))
}
