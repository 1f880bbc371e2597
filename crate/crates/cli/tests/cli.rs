use std::path::Path;
use std::process::{Command, Output};

use arc_cli::config::write_json;
use arc_cli::ExperimentConfig;
use arc_core::synth::SceneConfig;

fn arc_ssl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arc-ssl"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("ARC_SSL_THREADS")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = arc_ssl(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Small scene and short schedule so each run takes well under a second.
fn small(dir: &Path) {
    let mut cfg = ExperimentConfig {
        scene: SceneConfig {
            subcarriers: 12,
            packets: 200,
            class_count: 2,
            samples_per_class: 6,
            ..SceneConfig::default()
        },
        packets: 100,
        ..ExperimentConfig::default()
    };
    cfg.pretrain.mae.epochs = 1;
    cfg.pretrain.mae.patch = [4, 10];
    cfg.pretrain.mae.batch_size = 4;
    cfg.probe.epochs = 5;
    write_json(&dir.join("exp.json"), &cfg).unwrap();
    ok(&["synth", "--config", "exp.json", "--out", "data.csi"], dir);
}

#[test]
fn usage_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!arc_ssl(&[], dir.path()).status.success());
    assert!(!arc_ssl(&["pretrain", "--algo", "simclr"], dir.path()).status.success());
}

#[test]
fn config_errors_name_the_field_and_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"scene": {"antennas": "three"}}"#).unwrap();
    let out = arc_ssl(&["synth", "--config", "bad.json", "--out", "x.csi"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scene.antennas"));

    std::fs::write(dir.path().join("one.json"), r#"{"class_count": 1}"#).unwrap();
    let out = arc_ssl(&["synth", "--scene", "one.json", "--out", "x.csi"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    small(dir.path());
    let out = arc_ssl(&["pretrain", "--config", "exp.json", "--dataset", "nope.csi"], dir.path());
    assert_ne!(out.status.code(), Some(0));
    std::fs::write(dir.path().join("junk.csi"), b"not a container").unwrap();
    let out = arc_ssl(&["pretrain", "--config", "exp.json", "--dataset", "junk.csi"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn alpha_is_ignored_with_a_warning_outside_mae_arc() {
    let dir = tempfile::tempdir().unwrap();
    small(dir.path());
    let out = arc_ssl(
        &["pretrain", "--config", "exp.json", "--dataset", "data.csi", "--algo", "mae", "--alpha", "3", "--seeds", "0", "--output-dir", "runs"],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--alpha only applies to mae-arc"));
    assert!(dir.path().join("runs/mae_amp+conj-angle/seed-0").is_dir());
}

#[test]
fn pretrain_probe_and_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small(d);
    let out = ok(
        &["pretrain", "--config", "exp.json", "--dataset", "data.csi", "--seeds", "0,1,2,3,4", "--output-dir", "runs"],
        d,
    );
    assert_eq!(out.lines().count(), 5);
    let run = d.join("runs/mae-arc_amp+conj-angle_alpha0.1");
    for s in 0..5 {
        assert!(run.join(format!("seed-{s}/config.json")).exists());
        assert!(!run.join(format!("seed-{s}/results.csv")).exists());
    }

    ok(&["probe", "runs/mae-arc_amp+conj-angle_alpha0.1"], d);
    let merged = std::fs::read_to_string(d.join("runs/results.csv")).unwrap();
    assert_eq!(merged.lines().count(), 1 + 5 * 2);

    // probing again replaces rows instead of appending duplicates
    ok(&["probe", "runs/mae-arc_amp+conj-angle_alpha0.1/seed-0", "--kind", "linear"], d);
    assert_eq!(std::fs::read_to_string(d.join("runs/results.csv")).unwrap(), merged);

    let table = ok(&["report", "runs/results.csv", "--out", "report"], d);
    assert!(table.contains("MAE-ARC") || table.contains("mae-arc"), "{table}");
    assert!(d.join("report/report.csv").exists());
}

#[test]
fn sweep_writes_one_run_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small(d);
    let out = ok(
        &["sweep", "--config", "exp.json", "--dataset", "data.csi", "--seeds", "0", "--output-dir", "runs", "--param", "alpha", "--values", "0,1"],
        d,
    );
    assert!(out.contains("alpha"));
    let base = d.join("runs/sweep-alpha");
    assert!(base.join("alpha=0").is_dir() && base.join("alpha=1").is_dir());
    assert_eq!(std::fs::read_to_string(base.join("sweep.csv")).unwrap().lines().count(), 1 + 2 * 2);
    assert!(base.join("accuracy.svg").exists());

    let out = arc_ssl(&["sweep", "--config", "exp.json", "--dataset", "data.csi", "--param", "bogus", "--values", "1"], d);
    assert_eq!(out.status.code(), Some(2));
}
