//! Experiment harness around `arc-core`: JSON configs, run directories,
//! sweeps, result merging and reports. The `arc-ssl` binary is a thin
//! command-line layer over these functions.

pub mod config;
pub mod error;
pub mod plot;
pub mod results;
pub mod run;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::CliError;

/// Sizes the global thread pool from `ARC_SSL_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("ARC_SSL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("ARC_SSL_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}
