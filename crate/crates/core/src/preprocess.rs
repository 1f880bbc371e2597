//! Feature chain turning complex CSI into real-valued encoder views:
//! amplitude, conjugate multiplication against a reference antenna, principal
//! angle, time downsampling, antenna-triple selection, baseline augmentations
//! and train-split standardization.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::{Complex32, Complex64};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csi::{CsiTensor, DataError, Dataset, Dims};
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("antenna index {index} out of range for {antennas} antennas")]
    AntennaOutOfRange { index: usize, antennas: usize },
    #[error("antenna triple ({q}, {k}, {reference}) is not pairwise distinct")]
    NotDistinct { q: usize, k: usize, reference: usize },
    #[error("need at least 3 antennas, got {0}")]
    TooFewAntennas(usize),
    #[error("cannot downsample {have} packets to {want}")]
    BadTarget { have: usize, want: usize },
    #[error("unknown augmentation policy {0:?}")]
    UnknownPolicy(String),
    #[error("unknown feature mode {0:?}")]
    UnknownFeatureMode(String),
    #[error("view has {got} values, expected {want}")]
    Shape { got: usize, want: usize },
    #[error("non-finite value in view")]
    NonFinite,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    Amplitude,
    ConjAngle,
    RawAngle,
}

/// Real-valued `(k, t)` matrix fed to an encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTensor {
    pub kind: ViewKind,
    pub subcarriers: usize,
    pub packets: usize,
    pub values: Vec<f64>,
}

impl ViewTensor {
    pub fn new(kind: ViewKind, subcarriers: usize, packets: usize, values: Vec<f64>) -> Result<Self, PreprocessError> {
        if values.len() != subcarriers * packets {
            return Err(PreprocessError::Shape {
                got: values.len(),
                want: subcarriers * packets,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PreprocessError::NonFinite);
        }
        Ok(Self {
            kind,
            subcarriers,
            packets,
            values,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.subcarriers, self.packets)
    }
}

/// Complex `(k, t)` plane, e.g. a conjugate product.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPlane {
    pub subcarriers: usize,
    pub packets: usize,
    pub values: Vec<Complex64>,
}

/// Query, key and reference antenna indices, pairwise distinct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AntennaTriple {
    pub q: usize,
    pub k: usize,
    pub reference: usize,
}

impl AntennaTriple {
    pub fn new(q: usize, k: usize, reference: usize, antennas: usize) -> Result<Self, PreprocessError> {
        for index in [q, k, reference] {
            if index >= antennas {
                return Err(PreprocessError::AntennaOutOfRange { index, antennas });
            }
        }
        if q == k || q == reference || k == reference {
            return Err(PreprocessError::NotDistinct { q, k, reference });
        }
        Ok(Self { q, k, reference })
    }
}

/// Input representation named the same way in configs, the CLI and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureMode {
    #[serde(rename = "amp")]
    Amp,
    #[serde(rename = "conj-angle")]
    ConjAngle,
    #[serde(rename = "raw-angle")]
    RawAngle,
    #[serde(rename = "amp+conj-angle")]
    AmpConjAngle,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 4] = [
        FeatureMode::Amp,
        FeatureMode::ConjAngle,
        FeatureMode::RawAngle,
        FeatureMode::AmpConjAngle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Amp => "amp",
            FeatureMode::ConjAngle => "conj-angle",
            FeatureMode::RawAngle => "raw-angle",
            FeatureMode::AmpConjAngle => "amp+conj-angle",
        }
    }

    pub fn uses_amplitude(self) -> bool {
        matches!(self, FeatureMode::Amp | FeatureMode::AmpConjAngle)
    }

    /// View kind of the phase branch, if this mode has one.
    pub fn phase_kind(self) -> Option<ViewKind> {
        match self {
            FeatureMode::Amp => None,
            FeatureMode::ConjAngle | FeatureMode::AmpConjAngle => Some(ViewKind::ConjAngle),
            FeatureMode::RawAngle => Some(ViewKind::RawAngle),
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| PreprocessError::UnknownFeatureMode(s.to_string()))
    }
}

#[inline]
fn widen(z: Complex32) -> Complex64 {
    Complex64::new(z.re as f64, z.im as f64)
}

/// Elementwise modulus of antenna `a`.
pub fn amplitude(h: &CsiTensor, a: usize) -> Result<ViewTensor, PreprocessError> {
    let d = h.dims();
    let plane = antenna_plane(h, a)?;
    let values = plane
        .iter()
        .map(|z| {
            let (re, im) = (z.re as f64, z.im as f64);
            (re * re + im * im).sqrt()
        })
        .collect();
    Ok(ViewTensor {
        kind: ViewKind::Amplitude,
        subcarriers: d.subcarriers,
        packets: d.packets,
        values,
    })
}

/// `H(a) * conj(H(reference))` elementwise over `(k, t)`.
pub fn conjugate_product(h: &CsiTensor, a: usize, reference: usize) -> Result<ComplexPlane, PreprocessError> {
    if a == reference {
        return Err(PreprocessError::NotDistinct { q: a, k: a, reference });
    }
    let d = h.dims();
    let x = antenna_plane(h, a)?;
    let r = antenna_plane(h, reference)?;
    let values = x.iter().zip(r).map(|(&x, &r)| widen(x) * widen(r).conj()).collect();
    Ok(ComplexPlane {
        subcarriers: d.subcarriers,
        packets: d.packets,
        values,
    })
}

/// Returns `(C_q, C_k)`, the conjugate products of the query and key antennas
/// against the reference antenna.
pub fn conjugate_multiply(h: &CsiTensor, triple: AntennaTriple) -> Result<(ComplexPlane, ComplexPlane), PreprocessError> {
    let t = AntennaTriple::new(triple.q, triple.k, triple.reference, h.dims().antennas)?;
    Ok((conjugate_product(h, t.q, t.reference)?, conjugate_product(h, t.k, t.reference)?))
}

/// Principal argument in `(-pi, pi]`, with `angle(0) = 0`.
#[inline]
pub fn principal_angle(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let th = z.im.atan2(z.re);
    if th <= -PI {
        PI
    } else if th == 0.0 {
        0.0
    } else {
        th
    }
}

pub fn phase_angle(c: &ComplexPlane, kind: ViewKind) -> ViewTensor {
    ViewTensor {
        kind,
        subcarriers: c.subcarriers,
        packets: c.packets,
        values: c.values.iter().map(|&z| principal_angle(z)).collect(),
    }
}

/// Angle of the uncorrected CSI of antenna `a`; still carries the phase offset.
pub fn raw_angle(h: &CsiTensor, a: usize) -> Result<ViewTensor, PreprocessError> {
    let d = h.dims();
    let values = antenna_plane(h, a)?.iter().map(|&z| principal_angle(widen(z))).collect();
    Ok(ViewTensor {
        kind: ViewKind::RawAngle,
        subcarriers: d.subcarriers,
        packets: d.packets,
        values,
    })
}

pub fn conj_angle(h: &CsiTensor, a: usize, reference: usize) -> Result<ViewTensor, PreprocessError> {
    Ok(phase_angle(&conjugate_product(h, a, reference)?, ViewKind::ConjAngle))
}

fn antenna_plane(h: &CsiTensor, a: usize) -> Result<&[Complex32], PreprocessError> {
    h.antenna(a).map_err(|_| PreprocessError::AntennaOutOfRange {
        index: a,
        antennas: h.dims().antennas,
    })
}

/// Packet indices kept when downsampling `packets` to `target`: `floor(i * T / target)`.
pub fn downsample_indices(packets: usize, target: usize) -> Result<Vec<usize>, PreprocessError> {
    if target == 0 || target > packets {
        return Err(PreprocessError::BadTarget { have: packets, want: target });
    }
    Ok((0..target).map(|i| i * packets / target).collect())
}

pub fn downsample_time(h: &CsiTensor, target: usize) -> Result<CsiTensor, PreprocessError> {
    let d = h.dims();
    let keep = downsample_indices(d.packets, target)?;
    let out = Dims::new(d.antennas, d.subcarriers, target);
    Ok(CsiTensor::from_fn(out, |a, k, i| h.get(a, k, keep[i]))?)
}

pub fn downsample_dataset(ds: &Dataset, target: usize) -> Result<Dataset, PreprocessError> {
    let d = ds.dims();
    downsample_indices(d.packets, target)?;
    let out = Dims::new(d.antennas, d.subcarriers, target);
    Ok(ds.try_map(out, |h| {
        downsample_time(h, target).map_err(|e| DataError::Invariant(e.to_string()))
    })?)
}

/// Uniformly random ordered triple of distinct antennas.
pub fn select_antennas(antennas: usize, rng: &mut Rng) -> Result<AntennaTriple, PreprocessError> {
    if antennas < 3 {
        return Err(PreprocessError::TooFewAntennas(antennas));
    }
    let q = rng.random_range(0..antennas);
    let mut k = rng.random_range(0..antennas - 1);
    if k >= q {
        k += 1;
    }
    let (lo, hi) = if q < k { (q, k) } else { (k, q) };
    let mut reference = rng.random_range(0..antennas - 2);
    if reference >= lo {
        reference += 1;
    }
    if reference >= hi {
        reference += 1;
    }
    Ok(AntennaTriple { q, k, reference })
}

/// Conventional augmentations used by the non-ARC contrastive baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum AugmentPolicy {
    /// Adds i.i.d. Gaussian noise with standard deviation `sigma`.
    Jitter { sigma: f64 },
    /// Multiplies the whole view by `1 + sigma * N(0, 1)`.
    Scale { sigma: f64 },
    /// Zeroes one contiguous span of `round(ratio * T)` packets.
    TimeMask { ratio: f64 },
}

impl AugmentPolicy {
    pub fn from_name(name: &str, strength: f64) -> Result<Self, PreprocessError> {
        match name {
            "jitter" => Ok(AugmentPolicy::Jitter { sigma: strength }),
            "scale" => Ok(AugmentPolicy::Scale { sigma: strength }),
            "time_mask" => Ok(AugmentPolicy::TimeMask { ratio: strength }),
            other => Err(PreprocessError::UnknownPolicy(other.to_string())),
        }
    }

    pub fn default_pipeline() -> Vec<AugmentPolicy> {
        vec![
            AugmentPolicy::Scale { sigma: 0.2 },
            AugmentPolicy::Jitter { sigma: 0.2 },
            AugmentPolicy::TimeMask { ratio: 0.1 },
        ]
    }
}

pub fn augment_baseline(x: &ViewTensor, rng: &mut Rng, policy: AugmentPolicy) -> ViewTensor {
    let mut out = x.clone();
    match policy {
        AugmentPolicy::Jitter { sigma } => {
            if sigma != 0.0 {
                for v in &mut out.values {
                    let n: f64 = StandardNormal.sample(rng);
                    *v += sigma * n;
                }
            }
        }
        AugmentPolicy::Scale { sigma } => {
            if sigma != 0.0 {
                let n: f64 = StandardNormal.sample(rng);
                let factor = 1.0 + sigma * n;
                out.values.iter_mut().for_each(|v| *v *= factor);
            }
        }
        AugmentPolicy::TimeMask { ratio } => {
            let width = ((ratio * x.packets as f64).round() as usize).min(x.packets);
            if width > 0 {
                let start = rng.random_range(0..=x.packets - width);
                for k in 0..x.subcarriers {
                    out.values[k * x.packets + start..k * x.packets + start + width].fill(0.0);
                }
            }
        }
    }
    out
}

/// Global mean and standard deviation of one view kind, fit on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub fn fit<'a>(views: impl IntoIterator<Item = &'a ViewTensor>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0f64, 0.0f64);
        for v in views {
            n += v.values.len();
            sum += v.values.iter().sum::<f64>();
            sq += v.values.iter().map(|x| x * x).sum::<f64>();
        }
        if n == 0 {
            return Self { mean: 0.0, std: 1.0 };
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        Self { mean, std: var.sqrt() }
    }
}

/// Standardizes with `stats`; a zero spread only removes the mean.
pub fn normalize(x: &ViewTensor, stats: &NormStats) -> ViewTensor {
    let mut out = x.clone();
    if stats.std > 1e-12 {
        let inv = 1.0 / stats.std;
        out.values.iter_mut().for_each(|v| *v = (*v - stats.mean) * inv);
    } else {
        log::warn!("zero variance in {:?} statistics; view left unscaled", x.kind);
        out.values.iter_mut().for_each(|v| *v -= stats.mean);
    }
    out
}

/// Standardization statistics for every view kind, fit on a training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewStats {
    pub amplitude: NormStats,
    pub conj_angle: NormStats,
    pub raw_angle: NormStats,
}

impl ViewStats {
    /// Fits over every antenna (amplitude, raw angle) and every ordered
    /// antenna pair `(a, (a+1) mod A)` (conjugate angle) of `train`.
    pub fn fit(train: &Dataset) -> Result<Self, PreprocessError> {
        let a_n = train.dims().antennas;
        let mut amp = Vec::new();
        let mut conj = Vec::new();
        let mut raw = Vec::new();
        for s in train.samples() {
            for a in 0..a_n {
                amp.push(amplitude(&s.csi, a)?);
                raw.push(raw_angle(&s.csi, a)?);
                if a_n > 1 {
                    conj.push(conj_angle(&s.csi, a, (a + 1) % a_n)?);
                }
            }
        }
        Ok(Self {
            amplitude: NormStats::fit(&amp),
            conj_angle: NormStats::fit(&conj),
            raw_angle: NormStats::fit(&raw),
        })
    }

    pub fn for_kind(&self, kind: ViewKind) -> &NormStats {
        match kind {
            ViewKind::Amplitude => &self.amplitude,
            ViewKind::ConjAngle => &self.conj_angle,
            ViewKind::RawAngle => &self.raw_angle,
        }
    }

    /// Standardized view of `kind` for `antenna`; `reference` is used only
    /// by the conjugate angle.
    pub fn view(&self, h: &CsiTensor, kind: ViewKind, antenna: usize, reference: usize) -> Result<ViewTensor, PreprocessError> {
        let raw = match kind {
            ViewKind::Amplitude => amplitude(h, antenna)?,
            ViewKind::ConjAngle => conj_angle(h, antenna, reference)?,
            ViewKind::RawAngle => raw_angle(h, antenna)?,
        };
        Ok(normalize(&raw, self.for_kind(kind)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn random_tensor(seed: u64, dims: Dims) -> CsiTensor {
        let mut r = rng::seeded(seed);
        CsiTensor::from_fn(dims, |_, _, _| {
            Complex32::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0))
        })
        .unwrap()
    }

    /// Multiplies every antenna by the same exactly-unit-modulus factor
    /// `(-j)^n(k, t)`, i.e. an offset of a whole number of quarter turns.
    fn quarter_turn_offset(h: &CsiTensor, turns: &[u8]) -> CsiTensor {
        let p = h.dims().packets;
        h.map_shared(|k, t, z| match turns[k * p + t] % 4 {
            0 => z,
            1 => Complex32::new(z.im, -z.re),
            2 => Complex32::new(-z.re, -z.im),
            _ => Complex32::new(-z.im, z.re),
        })
        .unwrap()
    }

    #[test]
    fn amplitude_of_three_four() {
        let h = CsiTensor::from_fn(Dims::new(3, 2, 3), |_, _, _| Complex32::new(3.0, 4.0)).unwrap();
        let v = amplitude(&h, 1).unwrap();
        assert!(v.values.iter().all(|&x| x == 5.0));
        assert_eq!(v.kind, ViewKind::Amplitude);
        assert!(matches!(amplitude(&h, 3), Err(PreprocessError::AntennaOutOfRange { .. })));
    }

    #[test]
    fn amplitude_matches_scalar_loop() {
        let h = random_tensor(1, Dims::new(3, 5, 7));
        let v = amplitude(&h, 2).unwrap();
        for k in 0..5 {
            for t in 0..7 {
                let z = h.get(2, k, t);
                let want = ((z.re as f64).powi(2) + (z.im as f64).powi(2)).sqrt();
                assert!((v.values[k * 7 + t] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conjugate_multiply_rejects_reused_reference() {
        let h = random_tensor(2, Dims::new(3, 2, 2));
        let bad = AntennaTriple { q: 0, k: 1, reference: 0 };
        assert!(matches!(conjugate_multiply(&h, bad), Err(PreprocessError::NotDistinct { .. })));
        assert!(AntennaTriple::new(0, 1, 1, 3).is_err());
        assert!(AntennaTriple::new(0, 1, 3, 3).is_err());
    }

    #[test]
    fn conjugate_multiply_matches_hand_expansion() {
        let h = random_tensor(3, Dims::new(3, 2, 2));
        let (cq, ck) = conjugate_multiply(&h, AntennaTriple::new(2, 0, 1, 3).unwrap()).unwrap();
        for (plane, a) in [(&cq, 2), (&ck, 0)] {
            for k in 0..2 {
                for t in 0..2 {
                    let x = h.get(a, k, t);
                    let r = h.get(1, k, t);
                    let (xr, xi, rr, ri) = (x.re as f64, x.im as f64, r.re as f64, r.im as f64);
                    let re = xr * rr + xi * ri;
                    let im = xi * rr - xr * ri;
                    let got = plane.values[k * 2 + t];
                    assert!((got.re - re).abs() < 1e-12 && (got.im - im).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn axis_angles() {
        let c = ComplexPlane {
            subcarriers: 1,
            packets: 6,
            values: vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(-1.0, -0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(-0.0, -0.0),
            ],
        };
        let v = phase_angle(&c, ViewKind::ConjAngle);
        assert_eq!(v.values, vec![0.0, PI / 2.0, PI, PI, 0.0, 0.0]);
    }

    #[test]
    fn self_conjugate_product_has_zero_angle() {
        let mut r = rng::seeded(9);
        for _ in 0..1000 {
            let z = Complex64::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
            assert_eq!(principal_angle(z * z.conj()), 0.0);
        }
    }

    #[test]
    fn angle_matches_atan2_oracle() {
        let mut r = rng::seeded(10);
        for _ in 0..1000 {
            let (re, im) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
            let want = f64::atan2(im, re);
            assert!((principal_angle(Complex64::new(re, im)) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn downsampling_selects_floor_indices() {
        assert_eq!(downsample_indices(7, 3).unwrap(), vec![0, 2, 4]);
        let every_other = downsample_indices(1000, 500).unwrap();
        assert!(every_other.iter().enumerate().all(|(i, &t)| t == 2 * i));
        assert!(downsample_indices(5, 6).is_err());
        assert!(downsample_indices(5, 0).is_err());

        let h = random_tensor(4, Dims::new(3, 2, 7));
        assert_eq!(downsample_time(&h, 7).unwrap(), h);
        let d = downsample_time(&h, 3).unwrap();
        assert_eq!(d.dims(), Dims::new(3, 2, 3));
        assert_eq!(d.get(1, 1, 2), h.get(1, 1, 4));
    }

    #[test]
    fn triple_selection() {
        let mut r = rng::seeded(5);
        for _ in 0..100 {
            let t = select_antennas(3, &mut r).unwrap();
            let mut s = [t.q, t.k, t.reference];
            s.sort();
            assert_eq!(s, [0, 1, 2]);
        }
        assert!(matches!(select_antennas(2, &mut r), Err(PreprocessError::TooFewAntennas(2))));
        let a: Vec<_> = (0..10).map({
            let mut r = rng::seeded(8);
            move |_| select_antennas(5, &mut r).unwrap()
        }).collect();
        let b: Vec<_> = (0..10).map({
            let mut r = rng::seeded(8);
            move |_| select_antennas(5, &mut r).unwrap()
        }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn triples_are_uniform_over_ordered_choices() {
        // A = 4 has 24 ordered distinct triples; each count is Binomial(n, 1/24).
        let n = 100_000;
        let mut r = rng::seeded(77);
        let mut counts: HashMap<(usize, usize, usize), usize> = HashMap::new();
        for _ in 0..n {
            let t = select_antennas(4, &mut r).unwrap();
            *counts.entry((t.q, t.k, t.reference)).or_default() += 1;
        }
        assert_eq!(counts.len(), 24);
        let p = 1.0 / 24.0;
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for (&triple, &c) in &counts {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "{triple:?}: {c}");
        }
    }

    #[test]
    fn augmentations() {
        let x = ViewTensor::new(ViewKind::Amplitude, 3, 500, (0..1500).map(|i| 1.0 + i as f64).collect()).unwrap();
        let mut r = rng::seeded(1);
        assert_eq!(augment_baseline(&x, &mut r, AugmentPolicy::Jitter { sigma: 0.0 }), x);
        assert_eq!(augment_baseline(&x, &mut r, AugmentPolicy::Scale { sigma: 0.0 }), x);
        let m = augment_baseline(&x, &mut r, AugmentPolicy::TimeMask { ratio: 0.1 });
        let zero_cols = (0..500).filter(|&t| (0..3).all(|k| m.values[k * 500 + t] == 0.0)).count();
        assert_eq!(zero_cols, 50);
        assert!(matches!(AugmentPolicy::from_name("rotate", 1.0), Err(PreprocessError::UnknownPolicy(_))));
        assert_eq!(AugmentPolicy::from_name("scale", 0.5).unwrap(), AugmentPolicy::Scale { sigma: 0.5 });
    }

    #[test]
    fn normalization() {
        let c = ViewTensor::new(ViewKind::Amplitude, 2, 2, vec![3.0; 4]).unwrap();
        let z = normalize(&c, &NormStats::fit([&c]));
        assert_eq!(z.values, vec![0.0; 4]);

        let mut r = rng::seeded(3);
        let x = ViewTensor::new(ViewKind::Amplitude, 4, 50, (0..200).map(|_| r.random_range(0.0..7.0)).collect()).unwrap();
        let y = normalize(&x, &NormStats::fit([&x]));
        let n = y.values.len() as f64;
        let mean = y.values.iter().sum::<f64>() / n;
        let var = y.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn feature_mode_names() {
        for m in FeatureMode::ALL {
            assert_eq!(m.as_str().parse::<FeatureMode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert!("phase".parse::<FeatureMode>().is_err());
    }

    #[test]
    fn raw_angle_sees_the_offset() {
        let h = random_tensor(12, Dims::new(3, 2, 3));
        let shifted = quarter_turn_offset(&h, &[1; 6]);
        assert_ne!(raw_angle(&h, 0).unwrap(), raw_angle(&shifted, 0).unwrap());
        let t = AntennaTriple::new(0, 1, 2, 3).unwrap();
        assert_eq!(conjugate_multiply(&h, t).unwrap(), conjugate_multiply(&shifted, t).unwrap());
    }

    proptest! {
        #[test]
        fn gauge_invariance_is_exact(seed in any::<u64>(), turns in prop::collection::vec(0u8..4, 12)) {
            let h = random_tensor(seed, Dims::new(3, 3, 4));
            let g = quarter_turn_offset(&h, &turns);
            for a in 0..3 {
                prop_assert_eq!(amplitude(&h, a).unwrap(), amplitude(&g, a).unwrap());
            }
        }

        #[test]
        fn offset_cancellation_is_exact(seed in any::<u64>(), turns in prop::collection::vec(0u8..4, 12)) {
            let h = random_tensor(seed, Dims::new(4, 3, 4));
            let g = quarter_turn_offset(&h, &turns);
            let t = AntennaTriple::new(3, 1, 0, 4).unwrap();
            prop_assert_eq!(conjugate_multiply(&h, t).unwrap(), conjugate_multiply(&g, t).unwrap());
        }

        #[test]
        fn views_are_finite_and_angles_bounded(seed in any::<u64>()) {
            let h = random_tensor(seed, Dims::new(3, 3, 5));
            for a in 0..3 {
                let raw = raw_angle(&h, a).unwrap();
                let conj = conj_angle(&h, a, (a + 1) % 3).unwrap();
                for v in raw.values.iter().chain(&conj.values) {
                    prop_assert!(v.is_finite() && *v > -PI && *v <= PI);
                }
                prop_assert!(amplitude(&h, a).unwrap().values.iter().all(|v| v.is_finite() && *v >= 0.0));
            }
        }
    }
}
