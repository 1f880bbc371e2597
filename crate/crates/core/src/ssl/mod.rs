//! Self-supervised pretraining: MoCo-ARC, MAE-ARC and their non-ARC
//! baselines.
//!
//! ARC pairs two antennas `q` and `k` of one sample as positive views. The
//! amplitude branch encodes `|H(q)|` and `|H(k)|`; the phase branch encodes
//! the angles of `H(q) conj(H(ref))` and `H(k) conj(H(ref))` (or the raw
//! angles of `H(q)`, `H(k)` for the ablation). Each branch owns its own
//! encoder, optimizer and, for MoCo, key encoder and queue.

mod infonce;
mod mae;
mod moco;
mod queue;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csi::{CsiTensor, Dataset};
use crate::nn::{arch, Model, NnError, Shape3};
use crate::preprocess::{select_antennas, AntennaTriple, FeatureMode, PreprocessError, ViewKind, ViewStats, ViewTensor};
use crate::rng;

pub use infonce::{info_nce, InfoNceOutput};
pub use mae::{mae_arc_loss, pretrain_mae_arc, random_mask, reconstruction_mse, MaeArcLoss, MaeConfig, PatchMask};
pub use moco::{momentum_update, pretrain_moco_arc, MocoConfig, QueueInit};
pub use queue::FeatureQueue;

#[derive(Debug, Error)]
pub enum SslError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("feature has {got} dimensions, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}, step {step}, {branch} branch: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        branch: &'static str,
        detail: String,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "moco")]
    Moco,
    #[serde(rename = "moco-arc")]
    MocoArc,
    #[serde(rename = "mae")]
    Mae,
    #[serde(rename = "mae-arc")]
    MaeArc,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::Moco, Algo::MocoArc, Algo::Mae, Algo::MaeArc];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Moco => "moco",
            Algo::MocoArc => "moco-arc",
            Algo::Mae => "mae",
            Algo::MaeArc => "mae-arc",
        }
    }

    pub fn is_arc(self) -> bool {
        matches!(self, Algo::MocoArc | Algo::MaeArc)
    }

    pub fn is_mae(self) -> bool {
        matches!(self, Algo::Mae | Algo::MaeArc)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = SslError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algo::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| SslError::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub arch: String,
    pub feature_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            arch: arch::CONV_SMALL.to_string(),
            feature_dim: 64,
        }
    }
}

/// One encoder branch: amplitude, or one of the two angle views.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Amplitude,
    Phase(ViewKind),
}

impl Branch {
    pub fn for_mode(mode: FeatureMode) -> Vec<Branch> {
        let mut out = Vec::with_capacity(2);
        if mode.uses_amplitude() {
            out.push(Branch::Amplitude);
        }
        if let Some(kind) = mode.phase_kind() {
            out.push(Branch::Phase(kind));
        }
        out
    }

    pub fn kind(self) -> ViewKind {
        match self {
            Branch::Amplitude => ViewKind::Amplitude,
            Branch::Phase(k) => k,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Amplitude => "amplitude",
            Branch::Phase(_) => "phase",
        }
    }

    pub(crate) fn id(self) -> u64 {
        match self {
            Branch::Amplitude => 0,
            Branch::Phase(_) => 1,
        }
    }

    /// Standardized view of `antenna`; `reference` only matters for the
    /// conjugate angle.
    pub fn view(self, stats: &ViewStats, h: &CsiTensor, antenna: usize, reference: usize) -> Result<ViewTensor, SslError> {
        Ok(stats.view(h, self.kind(), antenna, reference)?)
    }
}

/// Mean losses and alignment after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_a: Option<f64>,
    pub loss_p: Option<f64>,
    pub alignment: f64,
}

/// Trained encoders plus everything needed to reuse them on new data.
#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub algo: Algo,
    pub mode: FeatureMode,
    pub stats: ViewStats,
    pub amp: Option<Model>,
    pub phase: Option<Model>,
    /// MAE decoders, kept for reconstruction diagnostics.
    pub amp_decoder: Option<Model>,
    pub phase_decoder: Option<Model>,
    /// MoCo momentum (key) encoders.
    pub amp_key: Option<Model>,
    pub phase_key: Option<Model>,
    pub initial_alignment: f64,
    pub log: Vec<EpochLog>,
}

impl PretrainOutput {
    pub fn encoder(&self, branch: Branch) -> Option<&Model> {
        match branch {
            Branch::Amplitude => self.amp.as_ref(),
            Branch::Phase(_) => self.phase.as_ref(),
        }
    }

    pub fn decoder(&self, branch: Branch) -> Option<&Model> {
        match branch {
            Branch::Amplitude => self.amp_decoder.as_ref(),
            Branch::Phase(_) => self.phase_decoder.as_ref(),
        }
    }

    pub fn final_alignment(&self) -> f64 {
        self.log.last().map(|l| l.alignment).unwrap_or(self.initial_alignment)
    }
}

/// Algorithm settings for every built-in method.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub moco: MocoConfig,
    pub mae: MaeConfig,
}

/// Entry point for pretraining algorithms. The built-in methods implement it
/// through [`Builtin`]; other methods can be plugged into the harness the
/// same way.
pub trait Pretrainer {
    fn name(&self) -> String;
    fn pretrain(&self, train: &Dataset, mode: FeatureMode, seed: u64) -> Result<PretrainOutput, SslError>;
}

#[derive(Debug, Clone)]
pub struct Builtin {
    pub algo: Algo,
    pub config: PretrainConfig,
}

impl Pretrainer for Builtin {
    fn name(&self) -> String {
        self.algo.to_string()
    }

    fn pretrain(&self, train: &Dataset, mode: FeatureMode, seed: u64) -> Result<PretrainOutput, SslError> {
        pretrain(train, self.algo, mode, &self.config, seed)
    }
}

pub fn pretrain(train: &Dataset, algo: Algo, mode: FeatureMode, cfg: &PretrainConfig, seed: u64) -> Result<PretrainOutput, SslError> {
    match algo {
        Algo::MocoArc => pretrain_moco_arc(train, mode, &cfg.moco, seed),
        Algo::MaeArc => pretrain_mae_arc(train, mode, &cfg.mae, seed),
        Algo::Moco | Algo::Mae => pretrain_baseline(train, algo, mode, cfg, seed),
    }
}

/// Non-ARC baselines: MoCo on two augmentations of one antenna's view, MAE
/// with plain masked reconstruction.
pub fn pretrain_baseline(train: &Dataset, algo: Algo, mode: FeatureMode, cfg: &PretrainConfig, seed: u64) -> Result<PretrainOutput, SslError> {
    match algo {
        Algo::Moco => moco::train(train, mode, &cfg.moco, seed, false),
        Algo::Mae => mae::train(train, mode, &cfg.mae, seed, false),
        other => Err(SslError::InvalidConfig(format!("{other} is not a baseline"))),
    }
}

// Stream tags keep every random decision on its own replayable stream.
pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_ORDER: u64 = 2;
pub(crate) const TAG_TRIPLE: u64 = 3;
pub(crate) const TAG_TRIPLE_BATCH: u64 = 4;
pub(crate) const TAG_MASK_Q: u64 = 5;
pub(crate) const TAG_MASK_K: u64 = 6;
pub(crate) const TAG_AUG_Q: u64 = 7;
pub(crate) const TAG_AUG_K: u64 = 8;
pub(crate) const TAG_MONITOR: u64 = 9;
pub(crate) const TAG_QUEUE: u64 = 10;
pub(crate) const TAG_DECODER: u64 = 11;
pub(crate) const TAG_EVAL_MASK: u64 = 12;

const MONITOR_SAMPLES: usize = 64;

/// Shared training scaffolding: branches, normalization and RNG streams.
pub(crate) struct Setup {
    pub branches: Vec<Branch>,
    pub stats: ViewStats,
    pub antennas: usize,
    pub input: Shape3,
}

impl Setup {
    pub fn new(train: &Dataset, mode: FeatureMode) -> Result<Self, SslError> {
        let dims = train.dims();
        if dims.antennas < 3 {
            return Err(PreprocessError::TooFewAntennas(dims.antennas).into());
        }
        if train.is_empty() {
            return Err(SslError::InvalidConfig("empty training set".into()));
        }
        Ok(Self {
            branches: Branch::for_mode(mode),
            stats: ViewStats::fit(train)?,
            antennas: dims.antennas,
            input: Shape3::new(1, dims.subcarriers, dims.packets),
        })
    }

    pub fn encoder(&self, cfg: &EncoderConfig, branch: Branch, seed: u64) -> Result<Model, SslError> {
        let a = arch::encoder(&cfg.arch, self.input.height, self.input.width, cfg.feature_dim)?;
        Ok(Model::init(a, &mut rng::stream(seed, &[TAG_INIT, branch.id()]))?)
    }

    /// Visiting order of the training samples in `epoch`.
    pub fn order(&self, n: usize, epoch: usize, seed: u64) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::stream(seed, &[TAG_ORDER, epoch as u64]));
        idx
    }

    /// Antenna triple for sample `sample` at batch `batch`: drawn per sample
    /// by default, once per batch with `per_batch`.
    pub fn triple(&self, seed: u64, epoch: usize, batch: usize, sample: usize, per_batch: bool) -> Result<AntennaTriple, SslError> {
        let mut r = if per_batch {
            rng::stream(seed, &[TAG_TRIPLE_BATCH, epoch as u64, batch as u64])
        } else {
            rng::stream(seed, &[TAG_TRIPLE, epoch as u64, sample as u64])
        };
        Ok(select_antennas(self.antennas, &mut r)?)
    }

    /// Per-branch loss sums to per-sample means as `(amplitude, phase)`.
    pub fn split_losses(&self, sums: &[f64], n: usize) -> (Option<f64>, Option<f64>) {
        let mut out = (None, None);
        for (b, s) in self.branches.iter().zip(sums) {
            let mean = Some(s / n as f64);
            match b {
                Branch::Amplitude => out.0 = mean,
                Branch::Phase(_) => out.1 = mean,
            }
        }
        out
    }

    /// Mean cosine between ARC-paired features on a fixed subset of the
    /// training set, averaged over branches.
    pub fn alignment(&self, train: &Dataset, encoders: &[&Model], seed: u64) -> Result<f64, SslError> {
        let n = train.len().min(MONITOR_SAMPLES);
        let mut total = 0.0;
        for (branch, enc) in self.branches.iter().zip(encoders) {
            for (i, s) in train.samples()[..n].iter().enumerate() {
                let t = select_antennas(self.antennas, &mut rng::stream(seed, &[TAG_MONITOR, i as u64]))?;
                let zq = enc.forward(&branch.view(&self.stats, &s.csi, t.q, t.reference)?.values)?;
                let zk = enc.forward(&branch.view(&self.stats, &s.csi, t.k, t.reference)?.values)?;
                total += cosine(&zq, &zk).unwrap_or(0.0);
            }
        }
        Ok(total / (n * self.branches.len()).max(1) as f64)
    }
}

/// Cosine similarity, or `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

pub(crate) fn batches(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch_size)
}

pub(crate) fn check_loss(loss: f64, epoch: usize, step: usize, branch: Branch) -> Result<(), SslError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(SslError::Diverged {
            epoch,
            step,
            branch: branch.name(),
            detail: format!("loss {loss}"),
        })
    }
}

pub(crate) fn diverged(e: NnError, epoch: usize, step: usize, branch: Branch) -> SslError {
    SslError::Diverged {
        epoch,
        step,
        branch: branch.name(),
        detail: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algo_names_round_trip() {
        for a in Algo::ALL {
            assert_eq!(a.as_str().parse::<Algo>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{a}\""));
        }
        assert!("simclr".parse::<Algo>().is_err());
    }

    #[test]
    fn branches_follow_feature_mode() {
        assert_eq!(Branch::for_mode(FeatureMode::Amp), vec![Branch::Amplitude]);
        assert_eq!(Branch::for_mode(FeatureMode::RawAngle), vec![Branch::Phase(ViewKind::RawAngle)]);
        assert_eq!(
            Branch::for_mode(FeatureMode::AmpConjAngle),
            vec![Branch::Amplitude, Branch::Phase(ViewKind::ConjAngle)]
        );
    }

    #[test]
    fn cosine_of_zero_vector_is_undefined() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), None);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
    }
}
