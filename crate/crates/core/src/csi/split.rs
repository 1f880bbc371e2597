use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::rng;

/// Train/test index sets; serialized verbatim as the split sidecar JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<u64>,
    pub test: Vec<u64>,
    pub seed: u64,
}

/// Stratified split: each class contributes `round(fraction * n_c)` samples to
/// the training side. Index lists are returned sorted.
pub fn split_indices(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<Split, DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidSplit(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<u64>> = vec![Vec::new(); ds.class_count()];
    for (i, s) in ds.samples().iter().enumerate() {
        by_class[s.label as usize].push(i as u64);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut idx) in by_class.into_iter().enumerate() {
        idx.shuffle(&mut rng::stream(seed, &[c as u64]));
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        test.extend_from_slice(&idx[n_train..]);
        idx.truncate(n_train);
        train.extend(idx);
    }
    if train.is_empty() || test.is_empty() {
        return Err(DataError::InvalidSplit(format!(
            "fraction {train_fraction} on {} samples leaves an empty split",
            ds.len()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test, seed })
}

pub fn split_dataset(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    let split = split_indices(ds, train_fraction, seed)?;
    Ok((ds.subset(&split.train)?, ds.subset(&split.test)?))
}

pub fn write_split(split: &Split, path: impl AsRef<Path>) -> Result<(), DataError> {
    fs::write(path, serde_json::to_vec(split)?)?;
    Ok(())
}

pub fn read_split(path: impl AsRef<Path>) -> Result<Split, DataError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
