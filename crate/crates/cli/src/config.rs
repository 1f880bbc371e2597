//! Experiment configuration documents.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use arc_core::preprocess::FeatureMode;
use arc_core::probe::{ProbeConfig, ProbeKind};
use arc_core::ssl::{Algo, PretrainConfig};
use arc_core::synth::SceneConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scene synthesized in memory when `dataset` is unset.
    pub scene: SceneConfig,
    /// Container file produced by `synth`; its `.split.json` sidecar is used when present.
    pub dataset: Option<PathBuf>,
    /// Packets kept after downsampling.
    pub packets: usize,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub algo: Algo,
    pub feature_mode: FeatureMode,
    pub pretrain: PretrainConfig,
    pub probes: Vec<ProbeKind>,
    pub probe: ProbeConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Write wall-clock seconds into result rows. Off by default so that
    /// replays produce identical files; timings always go to `timing.json`.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            dataset: None,
            packets: 500,
            train_fraction: 0.8,
            split_seed: 0,
            algo: Algo::MaeArc,
            feature_mode: FeatureMode::AmpConjAngle,
            pretrain: PretrainConfig::default(),
            probes: ProbeKind::ALL.to_vec(),
            probe: ProbeConfig::default(),
            seeds: (0..5).collect(),
            output_dir: PathBuf::from("runs"),
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds: must not be empty".into());
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return bad("seeds: must be distinct".into());
        }
        if let Some(p) = &self.dataset {
            if !p.exists() {
                return bad(format!("dataset: {} does not exist", p.display()));
            }
        } else {
            self.scene.validate()?;
            if self.packets > self.scene.packets {
                return bad(format!("packets: {} exceeds scene.packets {}", self.packets, self.scene.packets));
            }
        }
        if self.packets == 0 {
            return bad("packets: must be positive".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction: {} not in (0, 1)", self.train_fraction));
        }
        if self.probes.is_empty() {
            return bad("probes: must not be empty".into());
        }
        self.pretrain.moco.validate()?;
        self.pretrain.mae.validate()?;
        Ok(())
    }

    /// Alpha reported for this algorithm, if it has one.
    pub fn alpha(&self) -> Option<f64> {
        (self.algo == Algo::MaeArc).then_some(self.pretrain.mae.alpha)
    }

    /// Directory name shared by every seed of this configuration.
    pub fn run_name(&self) -> String {
        match self.alpha() {
            Some(a) => format!("{}_{}_alpha{}", self.algo, self.feature_mode, a),
            None => format!("{}_{}", self.algo, self.feature_mode),
        }
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(self.run_name()).join(format!("seed-{seed}"))
    }
}

/// Reads a JSON document, reporting schema violations with the offending field path.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        format!("at {path}: {}", e.into_inner())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("config types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
