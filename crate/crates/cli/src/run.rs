//! Run directories: data loading, pretraining, probing and result files.
//!
//! ```text
//! <output_dir>/<run_name>/seed-<s>/
//!     config.json        resolved experiment config and seed
//!     enc_amp.bin/.json  encoder checkpoints (present per feature mode)
//!     enc_phase.bin/.json
//!     view_stats.json    train-split standardization
//!     training_log.csv   epoch,loss_a,loss_p,alignment (epoch 0 = before training)
//!     results.csv        one row per probe
//!     diagnostics.json   feature spread and alignment
//!     timing.json        wall-clock seconds
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use arc_core::csi::{read_dataset, read_split, split_dataset, split_indices, write_dataset, write_split, Dataset};
use arc_core::nn::checkpoint;
use arc_core::preprocess::{downsample_dataset, ViewStats};
use arc_core::probe::{covariance_trace, evaluate, extract_features, fit_probe, ProbeKind, RunReport};
use arc_core::ssl::{pretrain, PretrainOutput};
use arc_core::synth::{synthesize, SceneConfig};

use crate::config::{read_json, write_json, ExperimentConfig};
use crate::error::CliError;

/// Train/test splits after downsampling.
#[derive(Debug, Clone)]
pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn split_sidecar(dataset: &Path) -> PathBuf {
    dataset.with_extension("split.json")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub path: PathBuf,
    pub samples: usize,
    pub antennas: usize,
    pub subcarriers: usize,
    pub packets: usize,
    pub classes: usize,
    /// SHA-256 of the container bytes.
    pub digest: String,
}

/// Writes the synthesized container and its split sidecar.
pub fn synth(scene: &SceneConfig, out: &Path, train_fraction: f64, split_seed: u64) -> Result<SynthSummary, CliError> {
    let ds = synthesize(scene)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    write_dataset(&ds, out)?;
    write_split(&split_indices(&ds, train_fraction, split_seed)?, split_sidecar(out))?;
    let bytes = fs::read(out).map_err(|e| CliError::io(out, e))?;
    let d = ds.dims();
    Ok(SynthSummary {
        path: out.to_path_buf(),
        samples: ds.len(),
        antennas: d.antennas,
        subcarriers: d.subcarriers,
        packets: d.packets,
        classes: ds.class_count(),
        digest: hex::encode(Sha256::digest(&bytes)),
    })
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Data, CliError> {
    let (train, test) = match &cfg.dataset {
        Some(path) => {
            let ds = read_dataset(path)?;
            let sidecar = split_sidecar(path);
            if sidecar.exists() {
                let split = read_split(&sidecar)?;
                (ds.subset(&split.train)?, ds.subset(&split.test)?)
            } else {
                split_dataset(&ds, cfg.train_fraction, cfg.split_seed)?
            }
        }
        None => split_dataset(&synthesize(&cfg.scene)?, cfg.train_fraction, cfg.split_seed)?,
    };
    let packets = train.dims().packets;
    if cfg.packets > packets {
        return Err(CliError::Config(format!("packets: {} exceeds the data's {packets}", cfg.packets)));
    }
    Ok(Data {
        train: downsample_dataset(&train, cfg.packets)?,
        test: downsample_dataset(&test, cfg.packets)?,
    })
}

/// Contents of a run's `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Covariance trace of normalized test features.
    pub covariance_trace: f64,
    pub initial_alignment: f64,
    pub final_alignment: f64,
}

const LOG_HEADER: &str = "epoch,loss_a,loss_p,alignment";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn update_timing(dir: &Path, key: &str, seconds: f64) -> Result<(), CliError> {
    let path = dir.join("timing.json");
    let mut map: serde_json::Map<String, serde_json::Value> = if path.exists() {
        read_json(&path)?
    } else {
        serde_json::Map::new()
    };
    map.insert(key.to_string(), seconds.into());
    write_json(&path, &map)
}

/// Pretrains one seed into its run directory. An existing directory with an
/// identical config and a finished log is reused; a different config is an error.
pub fn pretrain_run(cfg: &ExperimentConfig, data: &Data, seed: u64) -> Result<PathBuf, CliError> {
    let dir = cfg.run_dir(seed);
    let run = RunConfig {
        experiment: cfg.clone(),
        seed,
    };
    let config_path = dir.join("config.json");
    if config_path.exists() {
        let existing: RunConfig = read_json(&config_path)?;
        if existing != run {
            return Err(CliError::Config(format!(
                "{} holds a different config; refusing to resume",
                dir.display()
            )));
        }
        if dir.join("training_log.csv").exists() {
            log::info!("reusing finished run {}", dir.display());
            return Ok(dir);
        }
    }
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    write_json(&config_path, &run)?;

    let start = Instant::now();
    let out = pretrain(&data.train, cfg.algo, cfg.feature_mode, &cfg.pretrain, seed)?;
    let seconds = start.elapsed().as_secs_f64();
    for (name, model) in [("enc_amp.bin", &out.amp), ("enc_phase.bin", &out.phase)] {
        if let Some(m) = model {
            checkpoint::save(m, dir.join(name))?;
        }
    }
    write_json(&dir.join("view_stats.json"), &out.stats)?;
    update_timing(&dir, "pretrain_seconds", seconds)?;

    let mut log = format!("{LOG_HEADER}\n0,,,{}\n", out.initial_alignment);
    for e in &out.log {
        log += &format!("{},{},{},{}\n", e.epoch + 1, opt(e.loss_a), opt(e.loss_p), e.alignment);
    }
    write_file(&dir.join("training_log.csv"), &log)?;
    log::info!("pretrained {} in {seconds:.1}s", dir.display());
    Ok(dir)
}

/// Rebuilds the frozen encoders of a finished run.
pub fn load_run(dir: &Path) -> Result<(RunConfig, PretrainOutput), CliError> {
    let run: RunConfig = read_json(&dir.join("config.json"))?;
    let stats: ViewStats = read_json(&dir.join("view_stats.json"))?;
    let load = |name: &str| -> Result<Option<_>, CliError> {
        let p = dir.join(name);
        Ok(if p.exists() { Some(checkpoint::load(&p)?) } else { None })
    };
    let cfg = &run.experiment;
    let out = PretrainOutput {
        algo: cfg.algo,
        mode: cfg.feature_mode,
        stats,
        amp: load("enc_amp.bin")?,
        phase: load("enc_phase.bin")?,
        amp_decoder: None,
        phase_decoder: None,
        amp_key: None,
        phase_key: None,
        initial_alignment: f64::NAN,
        log: Vec::new(),
    };
    if out.amp.is_none() && out.phase.is_none() {
        return Err(CliError::Data(format!("{}: no encoder checkpoint", dir.display())));
    }
    Ok((run, out))
}

fn read_log_alignment(dir: &Path) -> Result<(f64, f64), CliError> {
    let path = dir.join("training_log.csv");
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .filter_map(|l| l.rsplit(',').next()?.parse().ok())
        .collect();
    match (values.first(), values.last()) {
        (Some(&a), Some(&b)) => Ok((a, b)),
        _ => Err(CliError::Data(format!("{}: empty training log", path.display()))),
    }
}

/// Fits and scores each probe on a finished run, replacing that run's
/// `results.csv` rows for those probes.
pub fn probe_run(dir: &Path, data: Option<&Data>, probes: &[ProbeKind]) -> Result<Vec<RunReport>, CliError> {
    let (run, enc) = load_run(dir)?;
    let cfg = &run.experiment;
    let owned;
    let data = match data {
        Some(d) => d,
        None => {
            owned = load_data(cfg)?;
            &owned
        }
    };
    let classes = data.train.class_count();
    let train = extract_features(&enc, &data.train, cfg.feature_mode)?;
    let test = extract_features(&enc, &data.test, cfg.feature_mode)?;

    let mut reports = Vec::new();
    for &kind in probes {
        let start = Instant::now();
        let probe = fit_probe(&train, classes, kind, &cfg.probe, run.seed)?;
        let m = evaluate(&probe, &test)?;
        let seconds = start.elapsed().as_secs_f64();
        update_timing(dir, &format!("probe_{kind}_seconds"), seconds)?;
        let report = RunReport {
            algo: cfg.algo.to_string(),
            feature_mode: cfg.feature_mode.to_string(),
            probe: kind.to_string(),
            seed: run.seed,
            alpha: cfg.alpha(),
            accuracy: m.accuracy,
            macro_f1: m.macro_f1,
            seconds: if cfg.record_timing { seconds } else { 0.0 },
        };
        report.validate().map_err(CliError::Training)?;
        reports.push(report);
    }

    let (initial_alignment, final_alignment) = read_log_alignment(dir)?;
    write_json(
        &dir.join("diagnostics.json"),
        &Diagnostics {
            covariance_trace: covariance_trace(&test.rows),
            initial_alignment,
            final_alignment,
        },
    )?;

    let path = dir.join("results.csv");
    let mut rows: Vec<RunReport> = if path.exists() { crate::results::read_reports(&path)? } else { Vec::new() };
    rows.retain(|r| !reports.iter().any(|n| n.probe == r.probe));
    rows.extend(reports.iter().cloned());
    rows.sort_by(|a, b| a.probe.cmp(&b.probe));
    crate::results::write_reports(&path, &rows)?;
    Ok(reports)
}

pub fn read_diagnostics(dir: &Path) -> Result<Diagnostics, CliError> {
    read_json(&dir.join("diagnostics.json"))
}

/// Pretrains and probes every seed of `cfg`, then merges the experiment's
/// `results.csv`. Seeds run in parallel on the current thread pool.
pub fn run_experiment(cfg: &ExperimentConfig, data: &Data) -> Result<Vec<RunReport>, CliError> {
    use rayon::prelude::*;
    cfg.validate()?;
    let per_seed: Vec<Vec<RunReport>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let dir = pretrain_run(cfg, data, seed)?;
            probe_run(&dir, Some(data), &cfg.probes)
        })
        .collect::<Result<_, CliError>>()?;
    crate::results::merge_results(&cfg.output_dir)?;
    Ok(per_seed.into_iter().flatten().collect())
}
