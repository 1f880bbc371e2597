//! CSI data model: tensors, labeled samples, datasets, the binary container
//! and stratified train/test splits.

mod container;
mod split;
mod tensor;

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use container::{read_dataset, read_dataset_from, write_dataset, write_dataset_to, MAGIC, VERSION};
pub use split::{read_split, split_dataset, split_indices, write_split, Split};
pub use tensor::{CsiTensor, Dims};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {found:?}, expected \"CSI1\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("file truncated inside sample {sample}")]
    Truncated { sample: u64 },
    #[error("sample {sample} has label {label} but only {classes} classes exist")]
    LabelOutOfRange { sample: u64, label: u32, classes: u32 },
    #[error("non-finite CSI value at (a={a}, k={k}, t={t})")]
    NonFinite { a: usize, k: usize, t: usize },
    #[error("antenna index {index} out of range for {antennas} antennas")]
    AntennaOutOfRange { index: usize, antennas: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One recording of one action: every antenna carries the same label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub csi: CsiTensor,
    pub label: u32,
}

/// Provenance stored in the container's JSON metadata blob.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub generator_seed: u64,
    pub scene_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dims: Dims,
    samples: Vec<LabeledSample>,
    class_names: Vec<String>,
    metadata: DatasetMetadata,
}

impl Dataset {
    pub fn new(
        dims: Dims,
        samples: Vec<LabeledSample>,
        class_names: Vec<String>,
        metadata: DatasetMetadata,
    ) -> Result<Self, DataError> {
        let ds = Self {
            dims,
            samples,
            class_names,
            metadata,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.dims.validate()?;
        if self.class_names.is_empty() {
            return Err(DataError::Invariant("dataset needs at least one class".into()));
        }
        if self.class_names.len() > u32::MAX as usize {
            return Err(DataError::Invariant("too many classes".into()));
        }
        for name in &self.class_names {
            if name.len() > u16::MAX as usize {
                return Err(DataError::Invariant(format!("class name too long: {} bytes", name.len())));
            }
        }
        let classes = self.class_names.len() as u32;
        for (i, s) in self.samples.iter().enumerate() {
            if s.csi.dims() != self.dims {
                return Err(DataError::Invariant(format!(
                    "sample {i} has dims {:?}, dataset has {:?}",
                    s.csi.dims(),
                    self.dims
                )));
            }
            if s.label >= classes {
                return Err(DataError::LabelOutOfRange {
                    sample: i as u64,
                    label: s.label,
                    classes,
                });
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn metadata(&self) -> &DatasetMetadata {
        &self.metadata
    }

    pub fn labels(&self) -> Vec<u32> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Builds a new dataset from the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[u64]) -> Result<Self, DataError> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i as usize)
                    .cloned()
                    .ok_or_else(|| DataError::InvalidSplit(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(self.dims, samples, self.class_names.clone(), self.metadata.clone())
    }

    /// Replaces every tensor with `f(tensor)`, each of which must have `dims`.
    pub fn try_map(
        &self,
        dims: Dims,
        mut f: impl FnMut(&CsiTensor) -> Result<CsiTensor, DataError>,
    ) -> Result<Self, DataError> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(LabeledSample {
                    csi: f(&s.csi)?,
                    label: s.label,
                })
            })
            .collect::<Result<Vec<_>, DataError>>()?;
        Self::new(dims, samples, self.class_names.clone(), self.metadata.clone())
    }
}
