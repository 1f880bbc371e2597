use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use arc_core::preprocess::FeatureMode;
use arc_core::probe::ProbeKind;
use arc_core::ssl::Algo;
use arc_core::synth::SceneConfig;

use arc_cli::config::read_json;
use arc_cli::results::{merge_results, render, report};
use arc_cli::run::{load_data, pretrain_run, probe_run, run_experiment, synth};
use arc_cli::sweep::{preset, sweep};
use arc_cli::{init_threads, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "arc-ssl", version, about = "Self-supervised WiFi CSI pretraining with antenna response consistency")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a dataset container and its split sidecar.
    Synth {
        /// Experiment config (its `scene`, `train_fraction` and `split_seed` are used).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Bare scene document, instead of an experiment config.
        #[arg(long, conflicts_with = "config")]
        scene: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Pretrain one encoder pair per seed.
    Pretrain {
        #[command(flatten)]
        exp: ExpArgs,
        /// Probe each run after pretraining.
        #[arg(long)]
        probe: bool,
    },
    /// Fit probes on pretrained runs and append to their results.csv.
    Probe {
        /// Run directories (`.../seed-N`) or experiment directories containing them.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long = "kind", value_parser = parse_probe)]
        kinds: Vec<ProbeKind>,
    },
    /// Sweep one parameter over values, or run a named preset.
    Sweep {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, required_unless_present = "preset")]
        param: Option<String>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', requires = "param")]
        values: Vec<String>,
        #[arg(long, conflicts_with = "param")]
        preset: Option<String>,
    },
    /// Pivot results files into the method x feature-mode grid.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, short, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ExpArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_algo)]
    algo: Option<Algo>,
    #[arg(long, value_parser = parse_mode)]
    feature_mode: Option<FeatureMode>,
    /// MAE-ARC consistency weight; ignored for other algorithms.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    s.parse().map_err(|e: arc_core::ssl::SslError| e.to_string())
}

fn parse_mode(s: &str) -> Result<FeatureMode, String> {
    s.parse().map_err(|e: arc_core::preprocess::PreprocessError| e.to_string())
}

fn parse_probe(s: &str) -> Result<ProbeKind, String> {
    s.parse().map_err(|e: arc_core::probe::ProbeError| e.to_string())
}

impl ExpArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => read_json(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(a) = self.algo {
            cfg.algo = a;
        }
        if let Some(m) = self.feature_mode {
            cfg.feature_mode = m;
        }
        if let Some(a) = self.alpha {
            if cfg.algo == Algo::MaeArc {
                cfg.pretrain.mae.alpha = a;
            } else {
                warn!("--alpha only applies to mae-arc; ignored for {}", cfg.algo);
            }
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(e) = self.epochs {
            cfg.pretrain.moco.epochs = e;
            cfg.pretrain.mae.epochs = e;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Seed directories under `path`: the path itself if it holds a run.
fn run_dirs(path: &Path) -> Vec<PathBuf> {
    if path.join("config.json").exists() {
        return vec![path.to_path_buf()];
    }
    let mut dirs: Vec<PathBuf> = walkdir::WalkDir::new(path)
        .min_depth(1)
        .max_depth(2)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_dir() && e.path().join("config.json").exists())
        .map(|e| e.into_path())
        .collect();
    dirs.sort();
    dirs
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Synth { config, scene, out } => {
            let (scene, frac, split_seed) = match (config, scene) {
                (_, Some(p)) => {
                    let d = ExperimentConfig::default();
                    (read_json::<SceneConfig>(&p)?, d.train_fraction, d.split_seed)
                }
                (Some(p), None) => {
                    let c: ExperimentConfig = read_json(&p)?;
                    (c.scene, c.train_fraction, c.split_seed)
                }
                (None, None) => {
                    let d = ExperimentConfig::default();
                    (d.scene, d.train_fraction, d.split_seed)
                }
            };
            let s = synth(&scene, &out, frac, split_seed)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
        }
        Cmd::Pretrain { exp, probe } => {
            let cfg = exp.resolve()?;
            let data = load_data(&cfg)?;
            if probe {
                let rows = run_experiment(&cfg, &data)?;
                info!("{} result rows", rows.len());
            } else {
                let dirs = cfg
                    .seeds
                    .par_iter()
                    .map(|&s| pretrain_run(&cfg, &data, s))
                    .collect::<Result<Vec<_>, _>>()?;
                for d in dirs {
                    println!("{}", d.display());
                }
            }
        }
        Cmd::Probe { runs, kinds } => {
            let kinds = if kinds.is_empty() { ProbeKind::ALL.to_vec() } else { kinds };
            let mut roots = Vec::new();
            for r in &runs {
                let dirs = run_dirs(r);
                if dirs.is_empty() {
                    return Err(CliError::Data(format!("{}: no pretrained run found", r.display())));
                }
                for d in dirs {
                    for row in probe_run(&d, None, &kinds)? {
                        println!("{} {} acc={:.4} f1={:.4}", d.display(), row.probe, row.accuracy, row.macro_f1);
                    }
                    if let Some(root) = d.parent().and_then(Path::parent) {
                        roots.push(root.to_path_buf());
                    }
                }
            }
            roots.sort();
            roots.dedup();
            for root in roots {
                merge_results(&root)?;
            }
        }
        Cmd::Sweep { exp, param, values, preset: name } => {
            let cfg = exp.resolve()?;
            if let Some(name) = name {
                print!("{}", render(&preset(&name, &cfg)?));
            } else {
                let param = param.expect("clap enforces --param without --preset");
                let base = cfg.output_dir.join(format!("sweep-{param}"));
                sweep(&cfg, &param, &values, None)?;
                let text = base.join("sweep.txt");
                print!("{}", std::fs::read_to_string(&text).map_err(|e| CliError::io(&text, e))?);
            }
        }
        Cmd::Report { results, out } => {
            print!("{}", render(&report(&results, &out)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match init_threads().and_then(|_| execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
