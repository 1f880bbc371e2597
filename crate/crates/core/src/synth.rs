//! Synthetic CSI from a multipath channel model.
//!
//! Each sample is
//!
//! ```text
//! H(a, k, t) = (Hs(a, k) + sum_l alpha_l(a) * exp(-j 2 pi tau_l(k, t))) * exp(-j 2 pi eps(k, t)) + noise
//! ```
//!
//! where the static part `Hs` and the attenuations `alpha_l` vary per antenna
//! and per sample (nuisance), the delays `tau_l` follow a class-specific
//! template (the "activity"), and the phase offset `eps` is shared by every
//! antenna of the sample. Delays and offsets are in cycles.

use std::f64::consts::TAU;

use num_complex::{Complex32, Complex64};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::csi::{CsiTensor, DataError, Dataset, DatasetMetadata, Dims, LabeledSample};
use crate::rng::{self, Rng};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("delay trajectory of path {path} is not finite at (k={k}, t={t})")]
    NonFiniteDelay { path: usize, k: usize, t: usize },
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseOffsetMode {
    None,
    /// One random offset per sample, shared by all subcarriers and packets.
    Constant,
    /// A fresh uniform offset for every packet.
    PerPacketRandom,
}

/// Generator parameters for the static component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticPathParams {
    pub path_count: usize,
    /// Upper bound on `|Hs(a, k)|`; each path gain is at most `max_magnitude / path_count`.
    pub max_magnitude: f64,
    /// Largest per-path delay (cycles at the centre frequency) used to shape `Hs` over subcarriers.
    pub max_delay: f64,
}

impl Default for StaticPathParams {
    fn default() -> Self {
        Self {
            path_count: 2,
            max_magnitude: 2.0,
            max_delay: 2.0,
        }
    }
}

/// Class-specific path-length template `d(t) = amplitude * sin(2 pi frequency t/T + phi) + drift * t/T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayTemplate {
    pub amplitude: f64,
    pub frequency: f64,
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicPathParams {
    pub path_count: usize,
    pub attenuation_min: f64,
    pub attenuation_max: f64,
    /// One template per class; empty selects the built-in family.
    pub templates: Vec<DelayTemplate>,
    /// Relative per-sample perturbation of template parameters.
    pub jitter: f64,
}

impl Default for DynamicPathParams {
    fn default() -> Self {
        Self {
            path_count: 1,
            attenuation_min: 0.2,
            attenuation_max: 1.0,
            templates: Vec::new(),
            jitter: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub antennas: usize,
    pub subcarriers: usize,
    pub packets: usize,
    pub class_count: usize,
    pub samples_per_class: usize,
    pub seed: u64,
    pub static_paths: StaticPathParams,
    pub dynamic: DynamicPathParams,
    pub phase_offset: PhaseOffsetMode,
    /// `None` disables noise.
    pub noise_snr_db: Option<f64>,
    /// Relative frequency span across subcarriers: `f_k / f_0 = 1 + span * (k/(K-1) - 1/2)`.
    pub bandwidth_fraction: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            antennas: 3,
            subcarriers: 30,
            packets: 1000,
            class_count: 6,
            samples_per_class: 100,
            seed: 0,
            static_paths: StaticPathParams::default(),
            dynamic: DynamicPathParams::default(),
            phase_offset: PhaseOffsetMode::PerPacketRandom,
            noise_snr_db: Some(20.0),
            bandwidth_fraction: 0.1,
        }
    }
}

impl SceneConfig {
    pub fn dims(&self) -> Dims {
        Dims::new(self.antennas, self.subcarriers, self.packets)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidScene(msg));
        if self.antennas == 0 || self.subcarriers == 0 || self.packets == 0 {
            return bad("antennas, subcarriers and packets must be positive".into());
        }
        if self.class_count < 2 {
            return bad(format!("class_count must be >= 2, got {}", self.class_count));
        }
        if self.samples_per_class < 1 {
            return bad("samples_per_class must be >= 1".into());
        }
        let d = &self.dynamic;
        if !(d.attenuation_min > 0.0 && d.attenuation_min <= d.attenuation_max && d.attenuation_max <= 1.0) {
            return bad(format!(
                "attenuation range must satisfy 0 < min <= max <= 1, got [{}, {}]",
                d.attenuation_min, d.attenuation_max
            ));
        }
        if !d.templates.is_empty() && d.templates.len() != self.class_count {
            return bad(format!(
                "{} delay templates given for {} classes",
                d.templates.len(),
                self.class_count
            ));
        }
        if !(d.jitter >= 0.0 && d.jitter < 1.0) {
            return bad(format!("jitter must lie in [0, 1), got {}", d.jitter));
        }
        let s = &self.static_paths;
        if !(s.max_magnitude >= 0.0 && s.max_magnitude.is_finite() && s.max_delay.is_finite()) {
            return bad("static path magnitude and delay must be finite and non-negative".into());
        }
        if let Some(snr) = self.noise_snr_db {
            if !snr.is_finite() {
                return bad("noise_snr_db must be finite".into());
            }
        }
        if !self.bandwidth_fraction.is_finite() {
            return bad("bandwidth_fraction must be finite".into());
        }
        Ok(())
    }

    /// Delay template driving class `class`.
    pub fn template(&self, class: usize) -> DelayTemplate {
        if let Some(t) = self.dynamic.templates.get(class) {
            return *t;
        }
        // three motion rates, each with and without a net path-length drift
        DelayTemplate {
            amplitude: 0.75,
            frequency: (1 + class % 3) as f64,
            drift: 1.5 * (class / 3) as f64,
        }
    }

    /// Normalized frequency `f_k / f_0` of subcarrier `k`.
    pub fn frequency_factor(&self, k: usize) -> f64 {
        if self.subcarriers < 2 {
            return 1.0;
        }
        1.0 + self.bandwidth_fraction * (k as f64 / (self.subcarriers - 1) as f64 - 0.5)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("scene serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Per-path random parameters of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDraw {
    /// `alpha_l(a)`, one per antenna.
    pub attenuation: Vec<f64>,
    pub base_delay: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub drift: f64,
    pub phase: f64,
}

/// Every random quantity that defines one sample, before noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDraw {
    pub class: usize,
    pub index: usize,
    /// `Hs(a, k)`, row-major over `(a, k)`.
    pub static_coefficients: Vec<Complex64>,
    pub paths: Vec<PathDraw>,
    /// `eps(k, t)` in cycles, row-major over `(k, t)`; one array for all antennas.
    pub phase_offset: Vec<f64>,
}

/// Noise-free and noise parts of one generated sample, kept in 64-bit.
#[derive(Debug, Clone)]
pub struct SampleParts {
    pub draw: SampleDraw,
    /// `(Hs + Hd) * exp(-j 2 pi eps)`, indexed `(a, k, t)`.
    pub clean: Vec<Complex64>,
    pub noise: Vec<Complex64>,
    pub csi: CsiTensor,
}

pub fn draw_sample(scene: &SceneConfig, class: usize, index: usize) -> SampleDraw {
    let (a_n, k_n, t_n) = (scene.antennas, scene.subcarriers, scene.packets);
    let mut rng = rng::stream(scene.seed, &[class as u64, index as u64, 0]);

    let sp = &scene.static_paths;
    let gain_max = if sp.path_count == 0 { 0.0 } else { sp.max_magnitude / sp.path_count as f64 };
    let delays: Vec<f64> = (0..sp.path_count).map(|_| rng.random::<f64>() * sp.max_delay).collect();
    let mut static_coefficients = vec![Complex64::new(0.0, 0.0); a_n * k_n];
    for a in 0..a_n {
        let paths: Vec<(f64, f64)> = (0..sp.path_count)
            .map(|_| (rng.random::<f64>() * gain_max, rng.random::<f64>()))
            .collect();
        for k in 0..k_n {
            let f = scene.frequency_factor(k);
            static_coefficients[a * k_n + k] = paths
                .iter()
                .zip(&delays)
                .map(|(&(g, psi), &d)| Complex64::from_polar(g, -TAU * (psi + d * f)))
                .sum();
        }
    }

    let tpl = scene.template(class);
    let dy = &scene.dynamic;
    let jitter = |rng: &mut Rng| 1.0 + dy.jitter * (2.0 * rng.random::<f64>() - 1.0);
    let paths = (0..dy.path_count)
        .map(|_| {
            let attenuation = (0..a_n)
                .map(|_| dy.attenuation_min + (dy.attenuation_max - dy.attenuation_min) * rng.random::<f64>())
                .collect();
            PathDraw {
                attenuation,
                base_delay: rng.random(),
                amplitude: tpl.amplitude * jitter(&mut rng),
                frequency: tpl.frequency * jitter(&mut rng),
                drift: tpl.drift * jitter(&mut rng),
                phase: TAU * rng.random::<f64>(),
            }
        })
        .collect();

    let mut off_rng = rng::stream(scene.seed, &[class as u64, index as u64, 2]);
    let phase_offset = match scene.phase_offset {
        PhaseOffsetMode::None => vec![0.0; k_n * t_n],
        PhaseOffsetMode::Constant => vec![off_rng.random::<f64>(); k_n * t_n],
        PhaseOffsetMode::PerPacketRandom => {
            let per_packet: Vec<f64> = (0..t_n).map(|_| off_rng.random()).collect();
            (0..k_n).flat_map(|_| per_packet.iter().copied()).collect()
        }
    };

    SampleDraw {
        class,
        index,
        static_coefficients,
        paths,
        phase_offset,
    }
}

/// `tau_l(k, t)` in cycles.
pub fn path_delay(scene: &SceneConfig, path: &PathDraw, k: usize, t: usize) -> f64 {
    let s = t as f64 / scene.packets as f64;
    let d = path.amplitude * (TAU * path.frequency * s + path.phase).sin() + path.drift * s;
    path.base_delay + d * scene.frequency_factor(k)
}

/// `Hd(a, k, t) = sum_l alpha_l(a) exp(-j 2 pi tau_l(k, t))`.
pub fn dynamic_component(
    scene: &SceneConfig,
    draw: &SampleDraw,
    a: usize,
    k: usize,
    t: usize,
) -> Result<Complex64, SynthError> {
    if a >= scene.antennas || k >= scene.subcarriers || t >= scene.packets {
        return Err(SynthError::OutOfRange(format!(
            "(a={a}, k={k}, t={t}) outside {}x{}x{}",
            scene.antennas, scene.subcarriers, scene.packets
        )));
    }
    Ok(draw
        .paths
        .iter()
        .map(|p| Complex64::from_polar(p.attenuation[a], -TAU * path_delay(scene, p, k, t)))
        .sum())
}

pub fn synthesize_sample(scene: &SceneConfig, class: usize, index: usize) -> Result<SampleParts, SynthError> {
    let draw = draw_sample(scene, class, index);
    let (a_n, k_n, t_n) = (scene.antennas, scene.subcarriers, scene.packets);
    let plane = k_n * t_n;

    // Path phasors and the offset rotation do not depend on the antenna.
    let mut phasors = vec![Complex64::new(0.0, 0.0); draw.paths.len() * plane];
    for (l, p) in draw.paths.iter().enumerate() {
        for k in 0..k_n {
            for t in 0..t_n {
                let tau = path_delay(scene, p, k, t);
                if !tau.is_finite() {
                    return Err(SynthError::NonFiniteDelay { path: l, k, t });
                }
                phasors[l * plane + k * t_n + t] = Complex64::from_polar(1.0, -TAU * tau);
            }
        }
    }
    let rotation: Vec<Complex64> = draw
        .phase_offset
        .iter()
        .map(|&e| Complex64::from_polar(1.0, -TAU * e))
        .collect();

    let mut clean = Vec::with_capacity(a_n * plane);
    for a in 0..a_n {
        for k in 0..k_n {
            let hs = draw.static_coefficients[a * k_n + k];
            for t in 0..t_n {
                let i = k * t_n + t;
                let mut h = hs;
                for (l, p) in draw.paths.iter().enumerate() {
                    h += phasors[l * plane + i] * p.attenuation[a];
                }
                clean.push(h * rotation[i]);
            }
        }
    }

    let noise = match scene.noise_snr_db {
        None => vec![Complex64::new(0.0, 0.0); clean.len()],
        Some(snr_db) => {
            let power = clean.iter().map(|z| z.norm_sqr()).sum::<f64>() / clean.len() as f64;
            let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
            let mut rng = rng::stream(scene.seed, &[class as u64, index as u64, 1]);
            (0..clean.len())
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(sigma * re, sigma * im)
                })
                .collect()
        }
    };

    let values = clean
        .iter()
        .zip(&noise)
        .map(|(c, n)| {
            let z = c + n;
            Complex32::new(z.re as f32, z.im as f32)
        })
        .collect();
    let csi = CsiTensor::new(scene.dims(), values)?;
    Ok(SampleParts {
        draw,
        clean,
        noise,
        csi,
    })
}

pub fn class_names(scene: &SceneConfig) -> Vec<String> {
    (0..scene.class_count)
        .map(|c| {
            let t = scene.template(c);
            format!("class{c}-f{}-d{}", t.frequency, t.drift)
        })
        .collect()
}

/// Generates the full labeled dataset, ordered by `(class, sample index)`.
pub fn synthesize(scene: &SceneConfig) -> Result<Dataset, SynthError> {
    scene.validate()?;
    let jobs: Vec<(usize, usize)> = (0..scene.class_count)
        .flat_map(|c| (0..scene.samples_per_class).map(move |i| (c, i)))
        .collect();
    let samples = jobs
        .par_iter()
        .map(|&(c, i)| {
            synthesize_sample(scene, c, i).map(|p| LabeledSample {
                csi: p.csi,
                label: c as u32,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let metadata = DatasetMetadata {
        generator_seed: scene.seed,
        scene_digest: scene.digest(),
    };
    Ok(Dataset::new(scene.dims(), samples, class_names(scene), metadata)?)
}
