//! Parameter sweeps and the built-in experiment preset.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use arc_core::preprocess::FeatureMode;
use arc_core::probe::{ProbeKind, RunReport};
use arc_core::ssl::Algo;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::plot::{line_chart, Series};
use crate::results::{mean_std, merge_results, report, Cell};
use crate::run::{load_data, probe_run, pretrain_run, read_diagnostics, Data};

pub const PARAMS: [&str; 8] = [
    "alpha",
    "feature_mode",
    "algo",
    "mask_ratio",
    "temperature",
    "momentum",
    "queue_size",
    "epochs",
];

fn parse<T: std::str::FromStr>(param: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{param}: cannot parse {value:?}")))
}

/// `cfg` with `param` set to `value`.
pub fn apply(cfg: &ExperimentConfig, param: &str, value: &str) -> Result<ExperimentConfig, CliError> {
    let mut c = cfg.clone();
    match param {
        "alpha" => {
            if c.algo != Algo::MaeArc {
                return Err(CliError::Config(format!("alpha only applies to mae-arc, not {}", c.algo)));
            }
            c.pretrain.mae.alpha = parse(param, value)?;
        }
        "feature_mode" => {
            c.feature_mode = value
                .parse::<FeatureMode>()
                .map_err(|e| CliError::Config(format!("feature_mode: {e}")))?
        }
        "algo" => c.algo = value.parse::<Algo>()?,
        "mask_ratio" => c.pretrain.mae.mask_ratio = parse(param, value)?,
        "temperature" => c.pretrain.moco.temperature = parse(param, value)?,
        "momentum" => c.pretrain.moco.momentum = parse(param, value)?,
        "queue_size" => c.pretrain.moco.queue_size = parse(param, value)?,
        "epochs" => {
            let e: usize = parse(param, value)?;
            c.pretrain.moco.epochs = e;
            c.pretrain.mae.epochs = e;
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown sweep parameter {other:?}; expected one of {}",
                PARAMS.join(", ")
            )))
        }
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub probe: ProbeKind,
    pub runs: usize,
    pub accuracy: (f64, f64),
    pub macro_f1: (f64, f64),
    /// Mean covariance trace of normalized test features.
    pub covariance_trace: f64,
}

/// Runs every value x seed, then writes `sweep.csv`, `sweep.txt` and one SVG
/// per metric into `<output_dir>/sweep-<param>/`.
pub fn sweep(cfg: &ExperimentConfig, param: &str, values: &[String], data: Option<&Data>) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let base = cfg.output_dir.join(format!("sweep-{param}"));
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|v| {
            let mut c = apply(cfg, param, v)?;
            c.output_dir = base.join(format!("{param}={v}"));
            Ok(c)
        })
        .collect::<Result<_, CliError>>()?;
    let owned;
    let data = match data {
        Some(d) => d,
        None => {
            owned = load_data(cfg)?;
            &owned
        }
    };
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|i| configs[i].seeds.iter().map(move |&s| (i, s)))
        .collect();
    let done: Vec<(usize, PathBuf, Vec<RunReport>)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let dir = pretrain_run(&configs[i], data, seed)?;
            let reports = probe_run(&dir, Some(data), &configs[i].probes)?;
            Ok((i, dir, reports))
        })
        .collect::<Result<_, CliError>>()?;
    for c in &configs {
        merge_results(&c.output_dir)?;
    }

    let mut rows = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let mine: Vec<&(usize, PathBuf, Vec<RunReport>)> = done.iter().filter(|d| d.0 == i).collect();
        let traces = mine
            .iter()
            .map(|d| read_diagnostics(&d.1).map(|x| x.covariance_trace))
            .collect::<Result<Vec<_>, _>>()?;
        for &probe in &configs[i].probes {
            let rs: Vec<&RunReport> = mine
                .iter()
                .flat_map(|d| d.2.iter())
                .filter(|r| r.probe == probe.as_str())
                .collect();
            let acc: Vec<f64> = rs.iter().map(|r| r.accuracy).collect();
            let f1: Vec<f64> = rs.iter().map(|r| r.macro_f1).collect();
            rows.push(SweepRow {
                value: v.clone(),
                probe,
                runs: rs.len(),
                accuracy: mean_std(&acc),
                macro_f1: mean_std(&f1),
                covariance_trace: mean_std(&traces).0,
            });
        }
    }
    write_sweep(&base, param, values, &rows)?;
    Ok(rows)
}

fn write_sweep(base: &Path, param: &str, values: &[String], rows: &[SweepRow]) -> Result<(), CliError> {
    fs::create_dir_all(base).map_err(|e| CliError::io(base, e))?;
    let mut csv = format!("{param},probe,runs,accuracy_mean,accuracy_std,macro_f1_mean,macro_f1_std,covariance_trace\n");
    let mut txt = format!("{:<16}{:<8}{:>6}{:>20}{:>20}{:>12}\n", param, "probe", "runs", "accuracy", "macro-F1", "cov-trace");
    for r in rows {
        csv += &format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.6}\n",
            r.value, r.probe, r.runs, r.accuracy.0, r.accuracy.1, r.macro_f1.0, r.macro_f1.1, r.covariance_trace
        );
        txt += &format!(
            "{:<16}{:<8}{:>6}{:>20}{:>20}{:>12.4}\n",
            r.value,
            r.probe.as_str(),
            r.runs,
            format!("{:.3} +- {:.3}", r.accuracy.0, r.accuracy.1),
            format!("{:.3} +- {:.3}", r.macro_f1.0, r.macro_f1.1),
            r.covariance_trace
        );
    }
    let write = |name: &str, text: &str| {
        let p = base.join(name);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    };
    write("sweep.csv", &csv)?;
    write("sweep.txt", &txt)?;
    for (metric, pick) in [
        ("accuracy", (|r: &SweepRow| r.accuracy) as fn(&SweepRow) -> (f64, f64)),
        ("macro_f1", |r: &SweepRow| r.macro_f1),
    ] {
        let mut probes: Vec<ProbeKind> = rows.iter().map(|r| r.probe).collect();
        probes.sort();
        probes.dedup();
        let series: Vec<Series> = probes
            .iter()
            .map(|&p| Series {
                name: p.to_string(),
                points: values
                    .iter()
                    .map(|v| rows.iter().find(|r| r.probe == p && &r.value == v).map(pick).unwrap_or((f64::NAN, 0.0)))
                    .collect(),
            })
            .collect();
        write(
            &format!("{metric}.svg"),
            &line_chart(&format!("{metric} vs {param}"), param, values, &series),
        )?;
    }
    Ok(())
}

pub const PRESETS: [&str; 1] = ["indomain-grid"];

/// `indomain-grid`: {moco, moco-arc, mae, mae-arc} x {amp, conj-angle,
/// amp+conj-angle} x the config's probes and seeds, then the report grid.
pub fn preset(name: &str, cfg: &ExperimentConfig) -> Result<Vec<Cell>, CliError> {
    if name != "indomain-grid" {
        return Err(CliError::Config(format!("unknown preset {name:?}; expected one of {}", PRESETS.join(", "))));
    }
    let base = cfg.output_dir.join(name);
    let data = load_data(cfg)?;
    let mut configs = Vec::new();
    for algo in Algo::ALL {
        for mode in [FeatureMode::Amp, FeatureMode::ConjAngle, FeatureMode::AmpConjAngle] {
            let mut c = cfg.clone();
            c.algo = algo;
            c.feature_mode = mode;
            c.output_dir = base.clone();
            configs.push(c);
        }
    }
    let jobs: Vec<(&ExperimentConfig, u64)> = configs.iter().flat_map(|c| c.seeds.iter().map(move |&s| (c, s))).collect();
    jobs.par_iter()
        .map(|&(c, seed)| {
            let dir = pretrain_run(c, &data, seed)?;
            probe_run(&dir, Some(&data), &c.probes).map(|_| ())
        })
        .collect::<Result<Vec<()>, CliError>>()?;
    let merged = merge_results(&base)?;
    report(&[merged], &base)
}
