//! Parameter checkpoints: a little-endian `f32` vector plus a JSON
//! descriptor sidecar holding the architecture.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, Model};
use super::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointDescriptor {
    pub architecture: Architecture,
    pub parameter_count: usize,
    pub dtype: String,
}

pub fn encode_params(params: &[f64]) -> Vec<u8> {
    params.iter().flat_map(|&p| (p as f32).to_le_bytes()).collect()
}

pub fn decode_params(bytes: &[u8]) -> Result<Vec<f64>, NnError> {
    if bytes.len() % 4 != 0 {
        return Err(NnError::Checkpoint(format!("{} bytes is not a whole number of f32 values", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes `<stem>.bin` and `<stem>.json` next to each other.
pub fn save(model: &Model, bin_path: impl AsRef<Path>) -> Result<(), NnError> {
    let bin_path = bin_path.as_ref();
    let desc = CheckpointDescriptor {
        architecture: model.architecture().clone(),
        parameter_count: model.param_count(),
        dtype: "f32-le".into(),
    };
    fs::write(bin_path, encode_params(model.params()))?;
    fs::write(bin_path.with_extension("json"), serde_json::to_vec_pretty(&desc)?)?;
    Ok(())
}

pub fn load(bin_path: impl AsRef<Path>) -> Result<Model, NnError> {
    let bin_path = bin_path.as_ref();
    let desc: CheckpointDescriptor = serde_json::from_slice(&fs::read(bin_path.with_extension("json"))?)?;
    let params = decode_params(&fs::read(bin_path)?)?;
    if params.len() != desc.parameter_count {
        return Err(NnError::ParameterCount { expected: desc.parameter_count, got: params.len() });
    }
    Model::from_params(desc.architecture, params)
}

/// Rounds parameters through `f32` so an in-memory model equals its reloaded checkpoint.
pub fn quantize(model: &mut Model) {
    for p in model.params_mut() {
        *p = *p as f32 as f64;
    }
}
