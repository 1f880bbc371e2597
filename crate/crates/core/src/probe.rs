//! Frozen-encoder evaluation: feature extraction, linear and two-layer
//! probes, accuracy and macro-F1, and per-run report records.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csi::Dataset;
use crate::nn::{loss, Architecture, LayerSpec, Model, NnError, Sgd, SgdConfig, Shape3};
use crate::preprocess::FeatureMode;
use crate::rng;
use crate::ssl::{Branch, PretrainOutput, SslError};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("probe needs at least two classes, found {0}")]
    SingleClass(usize),
    #[error("empty input")]
    Empty,
    #[error("feature rows have {got} columns, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: u32, classes: usize },
    #[error("feature mode {mode} needs a {branch} encoder")]
    MissingEncoder { mode: FeatureMode, branch: &'static str },
    #[error("unknown probe kind {0:?}")]
    UnknownKind(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Ssl(#[from] SslError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Linear,
    Mlp2,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 2] = [ProbeKind::Linear, ProbeKind::Mlp2];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::Linear => "linear",
            ProbeKind::Mlp2 => "mlp2",
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProbeKind {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ProbeKind::Linear),
            "mlp2" => Ok(ProbeKind::Mlp2),
            other => Err(ProbeError::UnknownKind(other.to_string())),
        }
    }
}

/// Row-major feature matrix with one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
}

impl Features {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Encodes every sample of `ds`. Each branch's feature is the mean over all
/// antennas `a` of the encoding of antenna `a` (conjugate angle against
/// `(a + 1) mod A`); combined modes concatenate `[amplitude; phase]`.
pub fn extract_features(enc: &PretrainOutput, ds: &Dataset, mode: FeatureMode) -> Result<Features, ProbeError> {
    let mut encoders = Vec::new();
    for branch in Branch::for_mode(mode) {
        let e = enc.encoder(branch).ok_or(ProbeError::MissingEncoder { mode, branch: branch.name() })?;
        encoders.push((branch, e));
    }
    let antennas = ds.dims().antennas;
    let rows = ds
        .samples()
        .par_iter()
        .map(|s| -> Result<Vec<f64>, ProbeError> {
            let mut row = Vec::new();
            for &(branch, e) in &encoders {
                let mut acc = vec![0.0; e.output_len()];
                for a in 0..antennas {
                    let x = branch.view(&enc.stats, &s.csi, a, (a + 1) % antennas)?;
                    for (s, v) in acc.iter_mut().zip(e.forward(&x.values)?) {
                        *s += v;
                    }
                }
                row.extend(acc.into_iter().map(|v| v / antennas as f64));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Features { rows, labels: ds.labels() })
}

/// Trace of the covariance of the L2-normalized feature rows; zero when all
/// features point the same way.
pub fn covariance_trace(rows: &[Vec<f64>]) -> f64 {
    if rows.len() < 2 {
        return 0.0;
    }
    let d = rows[0].len();
    let unit: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 { r.iter().map(|v| v / n).collect() } else { r.clone() }
        })
        .collect();
    let n = unit.len() as f64;
    let mut trace = 0.0;
    for j in 0..d {
        let mean = unit.iter().map(|r| r[j]).sum::<f64>() / n;
        trace += unit.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    }
    trace
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub optimizer: SgdConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            hidden: 128,
            optimizer: SgdConfig {
                lr: 0.05,
                momentum: 0.9,
                max_grad_norm: None,
            },
        }
    }
}

/// A fitted probe with the standardization it applies to its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeState {
    pub kind: ProbeKind,
    pub classes: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub model: Model,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
}

/// Network behind a probe of `kind`: softmax logits over `classes`.
pub fn probe_arch(kind: ProbeKind, inputs: usize, hidden: usize, classes: usize) -> Architecture {
    let layers = match kind {
        ProbeKind::Linear => vec![LayerSpec::Linear { inputs, outputs: classes }],
        ProbeKind::Mlp2 => vec![
            LayerSpec::Linear { inputs, outputs: hidden },
            LayerSpec::Relu,
            LayerSpec::Linear { inputs: hidden, outputs: classes },
        ],
    };
    Architecture {
        id: format!("probe-{kind}"),
        input: Shape3::new(1, 1, inputs),
        layers,
    }
}

fn check(features: &Features, classes: usize) -> Result<usize, ProbeError> {
    if features.rows.is_empty() {
        return Err(ProbeError::Empty);
    }
    let d = features.dim();
    for r in &features.rows {
        if r.len() != d {
            return Err(ProbeError::Dimension { expected: d, got: r.len() });
        }
    }
    if let Some(&label) = features.labels.iter().find(|&&l| l as usize >= classes) {
        return Err(ProbeError::Label { label, classes });
    }
    Ok(d)
}

/// Fits a softmax probe on frozen features with momentum SGD.
pub fn fit_probe(features: &Features, classes: usize, kind: ProbeKind, cfg: &ProbeConfig, seed: u64) -> Result<ProbeState, ProbeError> {
    let d = check(features, classes)?;
    let mut present = features.labels.clone();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(ProbeError::SingleClass(present.len()));
    }
    let n = features.rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| features.rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let var = features.rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 1e-24 { var.sqrt() } else { 1.0 }
        })
        .collect();
    let x: Vec<Vec<f64>> = features
        .rows
        .iter()
        .map(|r| r.iter().zip(&mean).zip(&std).map(|((v, m), s)| (v - m) / s).collect())
        .collect();

    let mut model = Model::init(probe_arch(kind, d, cfg.hidden, classes), &mut rng::stream(seed, &[0]))?;
    let mut opt = Sgd::new(cfg.optimizer, model.param_count())?;
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..x.len()).collect();
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng::stream(seed, &[1, epoch as u64]));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut grads = vec![0.0; model.param_count()];
            for &i in batch {
                let trace = model.forward_trace(&x[i])?;
                let (l, g) = loss::softmax_cross_entropy(trace.output(), features.labels[i] as usize);
                total += l;
                let g: Vec<f64> = g.iter().map(|v| v / batch.len() as f64).collect();
                model.backward(&trace, &g, &mut grads, false);
            }
            opt.step(model.params_mut(), &grads)?;
        }
        losses.push(total / n);
    }
    Ok(ProbeState {
        kind,
        classes,
        mean,
        std,
        model,
        losses,
    })
}

impl ProbeState {
    pub fn predict(&self, row: &[f64]) -> Result<u32, ProbeError> {
        if row.len() != self.mean.len() {
            return Err(ProbeError::Dimension { expected: self.mean.len(), got: row.len() });
        }
        let x: Vec<f64> = row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect();
        let logits = self.model.forward(&x)?;
        let mut best = 0;
        for (c, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = c;
            }
        }
        Ok(best as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// `confusion[truth][predicted]` counts.
pub fn confusion_matrix(predicted: &[u32], truth: &[u32], classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        m[t as usize][p as usize] += 1;
    }
    m
}

/// Accuracy and unweighted mean of per-class F1 over all `classes`; a class
/// with no true and no predicted members scores 0.
pub fn metrics(predicted: &[u32], truth: &[u32], classes: usize) -> Result<Metrics, ProbeError> {
    if truth.is_empty() || predicted.len() != truth.len() {
        return Err(ProbeError::Empty);
    }
    if let Some(&label) = predicted.iter().chain(truth).find(|&&l| l as usize >= classes) {
        return Err(ProbeError::Label { label, classes });
    }
    let m = confusion_matrix(predicted, truth, classes);
    let correct: u64 = (0..classes).map(|c| m[c][c]).sum();
    let mut f1_sum = 0.0;
    for c in 0..classes {
        let tp = m[c][c] as f64;
        let actual: u64 = m[c].iter().sum();
        let predicted_c: u64 = m.iter().map(|row| row[c]).sum();
        let denom = actual as f64 + predicted_c as f64;
        if denom > 0.0 {
            f1_sum += 2.0 * tp / denom;
        }
    }
    Ok(Metrics {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: f1_sum / classes as f64,
    })
}

pub fn evaluate(probe: &ProbeState, features: &Features) -> Result<Metrics, ProbeError> {
    check(features, probe.classes)?;
    let predicted = features.rows.iter().map(|r| probe.predict(r)).collect::<Result<Vec<_>, _>>()?;
    metrics(&predicted, &features.labels, probe.classes)
}

/// One evaluation record. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algo: String,
    pub feature_mode: String,
    pub probe: String,
    pub seed: u64,
    /// Empty for algorithms without an alpha.
    pub alpha: Option<f64>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub seconds: f64,
}

impl RunReport {
    pub const CSV_HEADER: &'static str = "algo,feature_mode,probe,seed,alpha,accuracy,macro_f1,seconds";

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("accuracy", self.accuracy), ("macro_f1", self.macro_f1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_difference, max_relative_error};
    use rand::Rng as _;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 0, 1, 2];
        let m = metrics(&y, &y, 3).unwrap();
        assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));
    }

    #[test]
    fn single_class_predictions_on_balanced_pair() {
        let truth = [0, 0, 1, 1];
        let m = metrics(&[0, 0, 0, 0], &truth, 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        // class 0: p = 1/2, r = 1 -> 2/3; class 1: 0
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn metrics_ignore_sample_order() {
        let p = [0, 2, 1, 1, 0, 2, 2];
        let t = [0, 1, 1, 2, 0, 2, 0];
        let a = metrics(&p, &t, 3).unwrap();
        let perm = [6, 3, 0, 5, 1, 4, 2];
        let pp: Vec<u32> = perm.iter().map(|&i| p[i]).collect();
        let tt: Vec<u32> = perm.iter().map(|&i| t[i]).collect();
        assert_eq!(metrics(&pp, &tt, 3).unwrap(), a);
    }

    #[test]
    fn macro_f1_matches_brute_force() {
        let mut r = rng::seeded(9);
        for _ in 0..50 {
            let c = r.random_range(2..6);
            let n = r.random_range(1..40);
            let p: Vec<u32> = (0..n).map(|_| r.random_range(0..c) as u32).collect();
            let t: Vec<u32> = (0..n).map(|_| r.random_range(0..c) as u32).collect();
            let mut f1 = 0.0;
            for class in 0..c as u32 {
                let tp = (0..n).filter(|&i| p[i] == class && t[i] == class).count() as f64;
                let fp = (0..n).filter(|&i| p[i] == class && t[i] != class).count() as f64;
                let fneg = (0..n).filter(|&i| p[i] != class && t[i] == class).count() as f64;
                if tp > 0.0 {
                    let prec = tp / (tp + fp);
                    let rec = tp / (tp + fneg);
                    f1 += 2.0 * prec * rec / (prec + rec);
                }
            }
            let got = metrics(&p, &t, c).unwrap();
            assert!((got.macro_f1 - f1 / c as f64).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&got.accuracy) && (0.0..=1.0).contains(&got.macro_f1));
        }
    }

    fn separable(n: usize, seed: u64) -> Features {
        let mut r = rng::seeded(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = (i % 2) as u32;
            let side = if y == 0 { -1.0 } else { 1.0 };
            rows.push(vec![side * r.random_range(0.5..2.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]);
            labels.push(y);
        }
        Features { rows, labels }
    }

    #[test]
    fn separable_problem_is_fit_exactly() {
        let f = separable(60, 1);
        for kind in ProbeKind::ALL {
            let p = fit_probe(&f, 2, kind, &ProbeConfig::default(), 3).unwrap();
            assert_eq!(evaluate(&p, &f).unwrap().accuracy, 1.0, "{kind}");
        }
    }

    #[test]
    fn loss_decreases_over_training() {
        let f = separable(80, 2);
        let cfg = ProbeConfig {
            epochs: 20,
            ..ProbeConfig::default()
        };
        let p = fit_probe(&f, 2, ProbeKind::Linear, &cfg, 4).unwrap();
        assert!(p.losses.last().unwrap() < &p.losses[0]);
        for w in p.losses.windows(2).take(5) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn zero_features_predict_the_majority_class() {
        let labels: Vec<u32> = [0, 0, 0, 0, 0, 0, 1, 1, 2, 2].to_vec();
        let f = Features {
            rows: vec![vec![0.0; 4]; labels.len()],
            labels,
        };
        let p = fit_probe(&f, 3, ProbeKind::Linear, &ProbeConfig::default(), 5).unwrap();
        assert!((evaluate(&p, &f).unwrap().accuracy - 0.6).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_rejected() {
        let f = Features {
            rows: vec![vec![1.0], vec![2.0]],
            labels: vec![1, 1],
        };
        assert!(matches!(
            fit_probe(&f, 2, ProbeKind::Linear, &ProbeConfig::default(), 0),
            Err(ProbeError::SingleClass(1))
        ));
    }

    #[test]
    fn cross_entropy_gradient_through_mlp_matches_finite_differences() {
        let arch = probe_arch(ProbeKind::Mlp2, 4, 6, 3);
        let m = Model::init(arch.clone(), &mut rng::seeded(7)).unwrap();
        let x = [0.3, -1.1, 0.8, 0.05];
        let trace = m.forward_trace(&x).unwrap();
        let (_, g) = loss::softmax_cross_entropy(trace.output(), 2);
        let mut grads = vec![0.0; m.param_count()];
        m.backward(&trace, &g, &mut grads, false);
        let fd = central_difference(
            |p| {
                let mm = Model::from_params(arch.clone(), p.to_vec()).unwrap();
                loss::softmax_cross_entropy(&mm.forward(&x).unwrap(), 2).0
            },
            m.params(),
            1e-4,
        );
        assert!(max_relative_error(&grads, &fd) < 1e-4);
    }

    #[test]
    fn covariance_trace_of_identical_directions_is_zero() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![0.5, 1.0]];
        assert!(covariance_trace(&rows).abs() < 1e-15);
        let spread = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]];
        // unit vectors with zero mean: trace = sum |x|^2 / (n - 1)
        assert!((covariance_trace(&spread) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn report_header_matches_field_order() {
        let r = RunReport {
            algo: "mae-arc".into(),
            feature_mode: "amp".into(),
            probe: "linear".into(),
            seed: 1,
            alpha: Some(0.1),
            accuracy: 0.5,
            macro_f1: 0.4,
            seconds: 0.0,
        };
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut header: Vec<&str> = RunReport::CSV_HEADER.split(',').collect();
        header.sort_unstable();
        let mut keys = keys;
        keys.sort_unstable();
        assert_eq!(keys, header);
        assert!(r.validate().is_ok());
    }
}
