use hostpar_core::{ModelError, OdeError, SimError, StateError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    State(#[from] StateError),
}
