use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use super::DataError;

/// Shape of a CSI tensor: antenna pairs × subcarriers × packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub antennas: usize,
    pub subcarriers: usize,
    pub packets: usize,
}

impl Dims {
    pub fn new(antennas: usize, subcarriers: usize, packets: usize) -> Self {
        Self {
            antennas,
            subcarriers,
            packets,
        }
    }

    pub fn len(&self) -> usize {
        self.antennas * self.subcarriers * self.packets
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of entries in one antenna plane (subcarriers × packets).
    pub fn plane_len(&self) -> usize {
        self.subcarriers * self.packets
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.antennas == 0 || self.subcarriers == 0 || self.packets == 0 {
            return Err(DataError::Invariant(format!(
                "dimensions must be positive, got {}x{}x{}",
                self.antennas, self.subcarriers, self.packets
            )));
        }
        Ok(())
    }
}

/// Complex CSI sample indexed `(a, k, t)` with `t` varying fastest.
///
/// Values are kept as 32-bit complex numbers so that the in-memory tensor and
/// the on-disk container agree bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTensor {
    dims: Dims,
    values: Vec<Complex32>,
}

impl CsiTensor {
    pub fn new(dims: Dims, values: Vec<Complex32>) -> Result<Self, DataError> {
        dims.validate()?;
        if values.len() != dims.len() {
            return Err(DataError::Invariant(format!(
                "expected {} values for {}x{}x{}, got {}",
                dims.len(),
                dims.antennas,
                dims.subcarriers,
                dims.packets,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            let (a, k, t) = dims_unravel(&dims, pos);
            return Err(DataError::NonFinite { a, k, t });
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Dims) -> Result<Self, DataError> {
        Self::new(dims, vec![Complex32::new(0.0, 0.0); dims.len()])
    }

    pub fn from_fn(
        dims: Dims,
        mut f: impl FnMut(usize, usize, usize) -> Complex32,
    ) -> Result<Self, DataError> {
        let mut values = Vec::with_capacity(dims.len());
        for a in 0..dims.antennas {
            for k in 0..dims.subcarriers {
                for t in 0..dims.packets {
                    values.push(f(a, k, t));
                }
            }
        }
        Self::new(dims, values)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[Complex32] {
        &self.values
    }

    #[inline]
    pub fn index(&self, a: usize, k: usize, t: usize) -> usize {
        (a * self.dims.subcarriers + k) * self.dims.packets + t
    }

    #[inline]
    pub fn get(&self, a: usize, k: usize, t: usize) -> Complex32 {
        self.values[self.index(a, k, t)]
    }

    /// The `(k, t)` plane of one antenna pair.
    pub fn antenna(&self, a: usize) -> Result<&[Complex32], DataError> {
        if a >= self.dims.antennas {
            return Err(DataError::AntennaOutOfRange {
                index: a,
                antennas: self.dims.antennas,
            });
        }
        let n = self.dims.plane_len();
        Ok(&self.values[a * n..(a + 1) * n])
    }

    /// Applies `f(k, t, z)` to every entry of every antenna, keeping the tensor
    /// finite. Used to impose shared per-packet transforms such as phase offsets.
    pub fn map_shared(
        &self,
        mut f: impl FnMut(usize, usize, Complex32) -> Complex32,
    ) -> Result<Self, DataError> {
        let d = self.dims;
        let mut values = Vec::with_capacity(self.values.len());
        for a in 0..d.antennas {
            for k in 0..d.subcarriers {
                for t in 0..d.packets {
                    values.push(f(k, t, self.get(a, k, t)));
                }
            }
        }
        Self::new(d, values)
    }
}

fn dims_unravel(dims: &Dims, pos: usize) -> (usize, usize, usize) {
    let t = pos % dims.packets;
    let rest = pos / dims.packets;
    (rest / dims.subcarriers, rest % dims.subcarriers, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_values() {
        let dims = Dims::new(3, 2, 2);
        let mut values = vec![Complex32::new(1.0, 0.0); dims.len()];
        values[7] = Complex32::new(f32::NAN, 0.0);
        match CsiTensor::new(dims, values) {
            Err(DataError::NonFinite { a, k, t }) => assert_eq!((a, k, t), (1, 1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_zero_dimension() {
        assert!(CsiTensor::zeros(Dims::new(3, 0, 4)).is_err());
    }

    #[test]
    fn index_order_is_time_fastest() {
        let dims = Dims::new(2, 3, 4);
        let h = CsiTensor::from_fn(dims, |a, k, t| {
            Complex32::new((a * 100 + k * 10 + t) as f32, 0.0)
        })
        .unwrap();
        assert_eq!(h.values()[1].re, 1.0);
        assert_eq!(h.values()[4].re, 10.0);
        assert_eq!(h.values()[12].re, 100.0);
        assert_eq!(h.antenna(1).unwrap()[0].re, 100.0);
        assert!(h.antenna(2).is_err());
    }
}
