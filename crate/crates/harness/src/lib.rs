//! Configuration, experiment orchestration and CSV output for the `hostpar`
//! command-line tool.

pub mod certify;
pub mod config;
pub mod convergence;
pub mod error;
pub mod initial;
pub mod output;

pub use config::{ExperimentConfig, Overrides};
pub use error::HarnessError;

/// Sizes the global rayon pool from `HOSTPAR_WORKERS` when set; otherwise
/// rayon's default of one worker per available core applies.
pub fn init_workers() -> Result<(), HarnessError> {
    let Ok(v) = std::env::var("HOSTPAR_WORKERS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| HarnessError::Config(format!("HOSTPAR_WORKERS={v:?} is not a count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::Config(e.to_string()))
}
