use rand_distr::{Distribution, StandardNormal};

use super::SslError;
use crate::rng::Rng;

/// FIFO ring buffer of unit-norm key features (negatives for InfoNCE).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureQueue {
    dim: usize,
    capacity: usize,
    entries: Vec<f64>,
    len: usize,
    cursor: usize,
}

impl FeatureQueue {
    pub fn new(dim: usize, capacity: usize) -> Result<Self, SslError> {
        if dim == 0 || capacity == 0 {
            return Err(SslError::InvalidConfig("queue needs positive dimension and capacity".into()));
        }
        Ok(Self {
            dim,
            capacity,
            entries: vec![0.0; dim * capacity],
            len: 0,
            cursor: 0,
        })
    }

    /// A full queue of random unit vectors.
    pub fn random(dim: usize, capacity: usize, rng: &mut Rng) -> Result<Self, SslError> {
        let mut q = Self::new(dim, capacity)?;
        for _ in 0..capacity {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            q.push(&v)?;
        }
        Ok(q)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Normalizes `key` and appends it, evicting the oldest entry when full.
    pub fn push(&mut self, key: &[f64]) -> Result<(), SslError> {
        if key.len() != self.dim {
            return Err(SslError::Dimension { expected: self.dim, got: key.len() });
        }
        let norm = key.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(SslError::NonFinite("queue key has zero or non-finite norm".into()));
        }
        let slot = &mut self.entries[self.cursor * self.dim..(self.cursor + 1) * self.dim];
        for (s, &v) in slot.iter_mut().zip(key) {
            *s = v / norm;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        let start = if self.len < self.capacity { 0 } else { self.cursor };
        (0..self.len).map(move |i| {
            let slot = (start + i) % self.capacity;
            &self.entries[slot * self.dim..(slot + 1) * self.dim]
        })
    }
}
