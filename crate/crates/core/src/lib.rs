//! Exact simulation, deterministic limit, independent-sum approximation and
//! pathwise coupling for host–parasite models with countably many load types.
//!
//! Hosts carry a parasite load `i ≥ 0`. The population is a
//! [`PopulationState`] of counts by load; its density `x = ξ / N` is a
//! [`DensityVector`]. A [`ModelSpec`] combines a state-independent baseline
//! chain with interaction rates evaluated at the density.

pub mod coupling;
pub mod error;
pub mod expm;
pub mod models;
pub mod ode;
pub mod rates;
pub mod rng;
pub mod ssa;
pub mod state;
pub mod stats;
pub mod tilde;

pub use error::{ModelError, OdeError, SimError, StateError};
pub use rates::{EventKind, ModelSpec};
pub use state::{DensityVector, Norms, PopulationState};
