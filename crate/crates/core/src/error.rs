use thiserror::Error;

use crate::ode::OdeSolution;
use crate::ssa::PathRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("cannot scale by N = 0")]
    ZeroScale,
    #[error("cannot remove {requested} hosts from load {load}: only {present} present")]
    Underflow {
        load: usize,
        present: u64,
        requested: u64,
    },
    #[error("invalid bound parameters: {0}")]
    InvalidBound(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("rate of kind {kind} at load {load:?} is not a finite nonnegative number: {value}")]
    NonFiniteRate {
        kind: &'static str,
        load: Option<usize>,
        value: f64,
    },
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("l11 norm exceeded blow-up cap {cap} at t = {time}")]
    BlowUp {
        time: f64,
        cap: f64,
        partial: Box<OdeSolution>,
    },
    #[error("step size underflow at t = {time} (h = {step}); the truncated system is too stiff")]
    StepUnderflow { time: f64, step: f64 },
    #[error("nonfinite drift at t = {time}")]
    NonFinite { time: f64 },
    #[error("truncation J = {j} exceeds dense exponential cap {cap}")]
    TruncationTooLarge { j: usize, cap: usize },
    #[error("invalid ODE input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event cap {cap} exceeded at t = {time}")]
    CapExceeded {
        cap: u64,
        time: f64,
        partial: Box<PathRecord>,
    },
    /// A sampled rate exceeded its declared dominator: the envelope
    /// declarations do not bound the model.
    #[error("dominating rate violated ({context}): actual {actual} > dominator {dominator} at t = {time}")]
    DominatorViolation {
        context: &'static str,
        actual: f64,
        dominator: f64,
        time: f64,
    },
    /// A pathwise coupling invariant failed.
    #[error("coupling invariant breached at t = {time}: {detail}")]
    InvariantBreach { time: f64, detail: String },
    #[error("invalid simulation input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    State(#[from] StateError),
}

impl SimError {
    /// True for violations that indicate a broken model declaration or a
    /// simulator bug rather than a recoverable condition.
    pub fn is_hard(&self) -> bool {
        matches!(
            self,
            SimError::DominatorViolation { .. } | SimError::InvariantBreach { .. }
        )
    }
}
