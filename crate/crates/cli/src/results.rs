//! `results.csv` files: per-run rows, experiment-level merge, and the
//! method x feature-mode report.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use arc_core::probe::RunReport;

use crate::error::CliError;

pub fn read_reports(path: &Path) -> Result<Vec<RunReport>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != RunReport::CSV_HEADER {
        return Err(CliError::Data(format!(
            "{}: header {:?} does not match {:?}",
            path.display(),
            header.join(","),
            RunReport::CSV_HEADER
        )));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: RunReport = row.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        r.validate().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        out.push(r);
    }
    Ok(out)
}

pub fn write_reports(path: &Path, rows: &[RunReport]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        w.write_record(RunReport::CSV_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

fn write_jsonl(path: &Path, rows: &[RunReport]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in rows {
        text += &serde_json::to_string(r).expect("reports serialize");
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Identity of a row; two rows with one key cannot be merged.
fn key(r: &RunReport) -> (String, String, String, String, u64) {
    let alpha = r.alpha.map(|a| a.to_string()).unwrap_or_default();
    (r.algo.clone(), r.feature_mode.clone(), r.probe.clone(), alpha, r.seed)
}

fn sort_checked(mut rows: Vec<RunReport>) -> Result<Vec<RunReport>, CliError> {
    rows.sort_by(|a, b| key(a).cmp(&key(b)));
    for w in rows.windows(2) {
        if key(&w[0]) == key(&w[1]) {
            let (algo, mode, probe, alpha, seed) = key(&w[0]);
            return Err(CliError::Data(format!(
                "duplicate result row: algo={algo} feature_mode={mode} probe={probe} alpha={alpha} seed={seed}"
            )));
        }
    }
    Ok(rows)
}

/// Collects `<dir>/<run>/seed-<s>/results.csv` into `<dir>/results.csv`
/// (and `results.jsonl`), sorted by row key.
pub fn merge_results(dir: &Path) -> Result<PathBuf, CliError> {
    let mut files: Vec<PathBuf> = WalkDir::new(dir)
        .min_depth(3)
        .max_depth(3)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_name() == "results.csv")
        .map(|e| e.into_path())
        .collect();
    files.sort();
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(read_reports(f)?);
    }
    let rows = sort_checked(rows)?;
    let out = dir.join("results.csv");
    write_reports(&out, &rows)?;
    write_jsonl(&dir.join("results.jsonl"), &rows)?;
    Ok(out)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub probe: String,
    pub method: String,
    pub feature_mode: String,
    pub runs: usize,
    pub accuracy: (f64, f64),
    pub macro_f1: (f64, f64),
    pub best: bool,
}

/// Method label: the algorithm, with alpha when it has one.
fn method(r: &RunReport) -> String {
    match r.alpha {
        Some(a) => format!("{}(alpha={a})", r.algo),
        None => r.algo.clone(),
    }
}

/// Pivots rows into per-probe method x feature-mode grids of seed means.
/// The best cell of each probe grid is the one with the highest mean accuracy.
pub fn pivot(rows: &[RunReport]) -> Result<Vec<Cell>, CliError> {
    let rows = sort_checked(rows.to_vec())?;
    let mut groups: BTreeMap<(String, String, String), Vec<&RunReport>> = BTreeMap::new();
    for r in &rows {
        groups
            .entry((r.probe.clone(), method(r), r.feature_mode.clone()))
            .or_default()
            .push(r);
    }
    let mut cells: Vec<Cell> = groups
        .into_iter()
        .map(|((probe, method, feature_mode), rs)| {
            let acc: Vec<f64> = rs.iter().map(|r| r.accuracy).collect();
            let f1: Vec<f64> = rs.iter().map(|r| r.macro_f1).collect();
            Cell {
                probe,
                method,
                feature_mode,
                runs: rs.len(),
                accuracy: mean_std(&acc),
                macro_f1: mean_std(&f1),
                best: false,
            }
        })
        .collect();
    let probes: BTreeSet<String> = cells.iter().map(|c| c.probe.clone()).collect();
    for p in probes {
        let best = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.probe == p)
            .max_by(|a, b| a.1.accuracy.0.total_cmp(&b.1.accuracy.0))
            .map(|(i, _)| i);
        if let Some(i) = best {
            cells[i].best = true;
        }
    }
    Ok(cells)
}

/// Writes `report.csv` and `report.txt` into `out_dir`.
pub fn report(inputs: &[PathBuf], out_dir: &Path) -> Result<Vec<Cell>, CliError> {
    let mut rows = Vec::new();
    for p in inputs {
        rows.extend(read_reports(p)?);
    }
    let cells = pivot(&rows)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;

    let csv_path = out_dir.join("report.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "probe", "method", "feature_mode", "runs", "accuracy_mean", "accuracy_std", "macro_f1_mean", "macro_f1_std", "best",
    ])?;
    for c in &cells {
        w.write_record([
            c.probe.clone(),
            c.method.clone(),
            c.feature_mode.clone(),
            c.runs.to_string(),
            format!("{:.4}", c.accuracy.0),
            format!("{:.4}", c.accuracy.1),
            format!("{:.4}", c.macro_f1.0),
            format!("{:.4}", c.macro_f1.1),
            c.best.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;

    let txt = render(&cells);
    let txt_path = out_dir.join("report.txt");
    fs::write(&txt_path, &txt).map_err(|e| CliError::io(&txt_path, e))?;
    Ok(cells)
}

/// Plain-text grids, one per probe; `*` marks the best cell.
pub fn render(cells: &[Cell]) -> String {
    let mut out = String::new();
    let probes: BTreeSet<&str> = cells.iter().map(|c| c.probe.as_str()).collect();
    for p in probes {
        let here: Vec<&Cell> = cells.iter().filter(|c| c.probe == p).collect();
        let modes: BTreeSet<&str> = here.iter().map(|c| c.feature_mode.as_str()).collect();
        let methods: BTreeSet<&str> = here.iter().map(|c| c.method.as_str()).collect();
        out += &format!("probe: {p}  (accuracy / macro-F1, mean over seeds)\n");
        out += &format!("{:<24}", "method");
        for m in &modes {
            out += &format!("{m:>24}");
        }
        out.push('\n');
        for me in &methods {
            out += &format!("{me:<24}");
            for mo in &modes {
                let cell = here.iter().find(|c| c.method == *me && c.feature_mode == *mo);
                let text = match cell {
                    Some(c) => format!("{}{:.3} / {:.3}", if c.best { "*" } else { "" }, c.accuracy.0, c.macro_f1.0),
                    None => "-".to_string(),
                };
                out += &format!("{text:>24}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(algo: &str, mode: &str, seed: u64, acc: f64) -> RunReport {
        RunReport {
            algo: algo.into(),
            feature_mode: mode.into(),
            probe: "linear".into(),
            seed,
            alpha: None,
            accuracy: acc,
            macro_f1: acc / 2.0,
            seconds: 0.0,
        }
    }

    #[test]
    fn grid_has_one_cell_per_method_and_mode() {
        let mut rows = Vec::new();
        for algo in ["mae", "moco"] {
            for (i, mode) in ["amp", "conj-angle", "amp+conj-angle"].iter().enumerate() {
                for seed in 0..2 {
                    rows.push(row(algo, mode, seed, 0.1 * (i + 1) as f64 + 0.01 * seed as f64));
                }
            }
        }
        let cells = pivot(&rows).unwrap();
        assert_eq!(cells.len(), 6);
        let best: Vec<&Cell> = cells.iter().filter(|c| c.best).collect();
        assert_eq!(best.len(), 1);
        let max = cells.iter().map(|c| c.accuracy.0).fold(f64::MIN, f64::max);
        assert_eq!(best[0].accuracy.0, max);
        assert!(render(&cells).contains('*'));
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let rows = vec![row("mae", "amp", 0, 0.5), row("mae", "amp", 0, 0.5)];
        assert!(matches!(pivot(&rows), Err(CliError::Data(_))));
    }

    #[test]
    fn csv_round_trip_keeps_empty_alpha() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut rows = vec![row("mae", "amp", 0, 0.5)];
        rows.push(RunReport {
            alpha: Some(0.1),
            ..row("mae-arc", "amp", 0, 0.75)
        });
        write_reports(&p, &rows).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(RunReport::CSV_HEADER));
        assert!(text.contains("mae,amp,linear,0,,0.5,0.25,0.0"));
        assert_eq!(read_reports(&p).unwrap(), rows);
    }

    #[test]
    fn mean_std_of_constant_is_zero_spread() {
        assert_eq!(mean_std(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
