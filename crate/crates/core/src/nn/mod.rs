//! Differentiable networks: layer kinds with analytic backward passes, the
//! architecture registry, a momentum optimizer, losses, gradient checking
//! and checkpoint I/O.

pub mod arch;
pub mod checkpoint;
pub mod gradcheck;
mod layers;
pub mod loss;
mod model;
mod optim;

use thiserror::Error;

pub use layers::{Layer, LayerSpec, Shape3};
pub use model::{Architecture, DecoderState, EncoderState, Model, Trace};
pub use optim::{Sgd, SgdConfig};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has {got} values, network expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("architecture needs {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("unknown architecture id {0:?}")]
    UnknownArchitecture(String),
    #[error("invalid optimizer settings: {0}")]
    InvalidOptimizer(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
