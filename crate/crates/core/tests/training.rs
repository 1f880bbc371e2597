use arc_core::csi::split_dataset;
use arc_core::preprocess::{downsample_dataset, FeatureMode};
use arc_core::probe::{fit_probe, Features, ProbeConfig, ProbeKind};
use arc_core::rng;
use arc_core::ssl::{pretrain, reconstruction_mse, Algo, PretrainConfig, PretrainOutput, QueueInit};
use arc_core::synth::{synthesize, SceneConfig};
use arc_core::Dataset;
use rand::Rng as _;

fn data() -> Dataset {
    let scene = SceneConfig {
        subcarriers: 12,
        packets: 200,
        class_count: 3,
        samples_per_class: 8,
        ..SceneConfig::default()
    };
    downsample_dataset(&synthesize(&scene).unwrap(), 100).unwrap()
}

fn config(epochs: usize) -> PretrainConfig {
    let mut cfg = PretrainConfig::default();
    cfg.mae.epochs = epochs;
    cfg.mae.patch = [4, 10];
    cfg.mae.batch_size = 4;
    cfg.moco.epochs = epochs;
    cfg.moco.batch_size = 4;
    cfg.moco.queue_size = 8;
    cfg
}

fn params(out: &PretrainOutput) -> Vec<Vec<f64>> {
    [&out.amp, &out.phase, &out.amp_decoder, &out.phase_decoder, &out.amp_key, &out.phase_key]
        .into_iter()
        .flatten()
        .map(|m| m.params().to_vec())
        .collect()
}

#[test]
fn pretraining_is_deterministic_per_seed() {
    let ds = data();
    let cfg = config(2);
    for algo in [Algo::MocoArc, Algo::MaeArc, Algo::Moco, Algo::Mae] {
        let a = pretrain(&ds, algo, FeatureMode::AmpConjAngle, &cfg, 11).unwrap();
        let b = pretrain(&ds, algo, FeatureMode::AmpConjAngle, &cfg, 11).unwrap();
        let c = pretrain(&ds, algo, FeatureMode::AmpConjAngle, &cfg, 12).unwrap();
        assert_eq!(params(&a), params(&b), "{algo}");
        assert_eq!(a.log, b.log, "{algo}");
        assert_ne!(params(&a), params(&c), "{algo}");
    }
}

#[test]
fn zero_learning_rate_keeps_initial_weights() {
    let ds = data();
    let mut cfg = config(2);
    cfg.mae.optimizer.lr = 0.0;
    cfg.moco.optimizer.lr = 0.0;
    for algo in [Algo::MocoArc, Algo::MaeArc] {
        let trained = pretrain(&ds, algo, FeatureMode::AmpConjAngle, &cfg, 5).unwrap();
        let init = pretrain(&ds, algo, FeatureMode::AmpConjAngle, &config(0), 5).unwrap();
        assert_eq!(trained.amp, init.amp, "{algo}");
        assert_eq!(trained.phase, init.phase, "{algo}");
        assert_eq!(trained.amp_decoder, init.amp_decoder, "{algo}");
        // EMA of identical weights moves them only by rounding
        for (k, k0) in params(&trained).iter().flatten().zip(params(&init).iter().flatten()) {
            assert!((k - k0).abs() <= 1e-12 * k0.abs().max(1.0), "{algo}");
        }
    }
}

#[test]
fn mae_reconstruction_improves_on_train_and_held_out() {
    let (train, test) = split_dataset(&data(), 0.75, 0).unwrap();
    let cfg = config(20);
    let out = pretrain(&train, Algo::Mae, FeatureMode::AmpConjAngle, &cfg, 1).unwrap();
    let init = pretrain(&train, Algo::Mae, FeatureMode::AmpConjAngle, &config(0), 1).unwrap();
    for (name, ds, factor) in [("train", &train, 0.9), ("test", &test, 1.0)] {
        let before = reconstruction_mse(&init, ds, &cfg.mae, 9).unwrap();
        let after = reconstruction_mse(&out, ds, &cfg.mae, 9).unwrap();
        assert!(after < factor * before, "{name} mse {before} -> {after}");
    }
}

#[test]
fn random_queue_init_is_supported() {
    let ds = data();
    let mut cfg = config(1);
    cfg.moco.queue_init = QueueInit::Random;
    let a = pretrain(&ds, Algo::MocoArc, FeatureMode::Amp, &cfg, 2).unwrap();
    cfg.moco.queue_init = QueueInit::Keys;
    let b = pretrain(&ds, Algo::MocoArc, FeatureMode::Amp, &cfg, 2).unwrap();
    assert_ne!(params(&a), params(&b));
    let parsed: QueueInit = serde_json::from_str("\"random\"").unwrap();
    assert_eq!(parsed, QueueInit::Random);
}

#[test]
fn probe_loss_decreases_on_separable_clusters() {
    let mut r = rng::seeded(3);
    let centers = [[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]];
    let mut feats = Features { rows: Vec::new(), labels: Vec::new() };
    for i in 0..60 {
        let c = i % 3;
        feats.rows.push(centers[c].iter().map(|m| m + r.random_range(-0.5..0.5)).collect());
        feats.labels.push(c as u32);
    }
    let cfg = ProbeConfig { epochs: 20, ..ProbeConfig::default() };
    for kind in ProbeKind::ALL {
        let p = fit_probe(&feats, 3, kind, &cfg, 0).unwrap();
        assert!(p.losses.last().unwrap() < &(0.5 * p.losses[0]), "{kind}: {:?}", p.losses);
        let correct = feats.rows.iter().zip(&feats.labels).filter(|(x, &y)| p.predict(x).unwrap() == y).count();
        assert_eq!(correct, feats.rows.len(), "{kind}");
    }
}

#[test]
fn contrastive_loss_decreases_over_20_epochs() {
    let ds = data();
    let mut cfg = config(20);
    cfg.moco.queue_size = 16;
    for algo in [Algo::MocoArc, Algo::Moco] {
        let out = pretrain(&ds, algo, FeatureMode::AmpConjAngle, &cfg, 4).unwrap();
        let (first, last) = (out.log.first().unwrap(), out.log.last().unwrap());
        assert!(last.loss_a.unwrap() < first.loss_a.unwrap(), "{algo}: {:?}", out.log);
        assert!(last.loss_p.unwrap() < first.loss_p.unwrap(), "{algo}: {:?}", out.log);
    }
}
