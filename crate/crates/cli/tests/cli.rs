use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dsthcn::data::{read_skl, write_skl, Dataset, SkeletonSample};
use dsthcn::hypergraph::SkeletonId;
use dsthcn::io::{parse_matrix_csv, parse_scores_csv, scores_csv};
use dsthcn::training::{lr_at, TrainConfig};
use dsthcn::Tensor;
use tempfile::TempDir;

const TINY_CONFIG: &str = r#"{
  "model": {"blocks": [{"channels": 8}, {"channels": 8, "stride": 2}], "k_temporal": 3},
  "train": {"epochs": 4, "warmup_epochs": 1, "batch_size": 4}
}"#;

fn dsthcn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsthcn"))
        .args(args)
        .current_dir(dir)
        .env_remove("DSTHCN_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = dsthcn(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Asserts failure with a single diagnostic line and returns it.
fn fails(args: &[&str], dir: &Path) -> String {
    let out = dsthcn(args, dir);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

fn accuracy_line(stdout: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with("top-1 accuracy: ")).expect("accuracy line");
    line["top-1 accuracy: ".len()..].split(' ').next().unwrap().parse().unwrap()
}

/// Generates train/val files and trains the tiny config into `out/`.
fn trained(dir: &Path) -> PathBuf {
    ok(&["gen-data", "--out", "tr.skl", "--classes", "3", "--per-class", "4", "--frames", "10", "--seed", "1"], dir);
    ok(&["gen-data", "--out", "va.skl", "--classes", "3", "--per-class", "2", "--frames", "10", "--seed", "2"], dir);
    fs::write(dir.join("cfg.json"), TINY_CONFIG).unwrap();
    ok(&["train", "--config", "cfg.json", "--data", "tr.skl", "--val", "va.skl", "--out-dir", "out", "--seed", "5"], dir);
    dir.join("out")
}

#[test]
fn gen_data_defaults_and_determinism() {
    let dir = TempDir::new().unwrap();
    ok(&["gen-data", "--out", "a.skl", "--seed", "9"], dir.path());
    ok(&["gen-data", "--out", "b.skl", "--seed", "9"], dir.path());
    let d = read_skl(dir.path().join("a.skl")).unwrap();
    assert_eq!((d.num_classes, d.len(), d.skeleton), (4, 96, SkeletonId::Ntu25));
    assert_eq!(fs::read(dir.path().join("a.skl")).unwrap(), fs::read(dir.path().join("b.skl")).unwrap());
    ok(&["gen-data", "--out", "c.skl", "--seed", "10"], dir.path());
    assert_ne!(fs::read(dir.path().join("a.skl")).unwrap(), fs::read(dir.path().join("c.skl")).unwrap());
}

#[test]
fn gen_data_single_class_is_rejected() {
    let dir = TempDir::new().unwrap();
    let err = fails(&["gen-data", "--out", "x.skl", "--classes", "1"], dir.path());
    assert!(err.contains("input error"), "{err}");
    assert!(!dir.path().join("x.skl").exists());
}

#[test]
fn unwritable_output_fails_cleanly() {
    let dir = TempDir::new().unwrap();
    fails(&["gen-data", "--out", "missing/dir/x.skl"], dir.path());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn train_emits_files_with_scheduled_lr_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let out = trained(dir.path());
    for f in ["model.dsta", "last.dsta", "metrics.csv", "config.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        warmup_epochs: 1,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("epoch,lr,train_loss,train_acc,val_acc"));
    for (e, line) in lines.enumerate() {
        let lr: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(lr, lr_at(e, &cfg).unwrap());
    }
    let resolved = fs::read_to_string(out.join("config.json")).unwrap();
    assert!(resolved.contains("\"seed\": 5"), "{resolved}");

    ok(
        &["train", "--config", "cfg.json", "--data", "tr.skl", "--val", "va.skl", "--out-dir", "again", "--seed", "5"],
        dir.path(),
    );
    assert_eq!(metrics, fs::read_to_string(dir.path().join("again/metrics.csv")).unwrap());
    assert_eq!(fs::read(out.join("model.dsta")).unwrap(), fs::read(dir.path().join("again/model.dsta")).unwrap());
}

#[test]
fn train_failures_leave_no_output() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["gen-data", "--out", "tr.skl", "--classes", "3", "--per-class", "2", "--frames", "10"], d);
    ok(&["gen-data", "--out", "four.skl", "--classes", "4", "--per-class", "2", "--frames", "10"], d);
    fs::write(d.join("typo.json"), r#"{"train": {"epoch": 3}}"#).unwrap();
    let err = fails(&["train", "--config", "typo.json", "--data", "tr.skl", "--val", "tr.skl", "--out-dir", "o1"], d);
    assert!(err.contains("config error") && err.contains("epoch"), "{err}");
    fails(&["train", "--data", "tr.skl", "--val", "four.skl", "--out-dir", "o2"], d);
    // default plan halves 10 frames twice, leaving fewer than k_temporal
    let err = fails(&["train", "--data", "tr.skl", "--val", "tr.skl", "--out-dir", "o3"], d);
    assert!(err.contains("config error"), "{err}");
    for o in ["o1", "o2", "o3"] {
        assert!(!d.join(o).exists(), "{o}");
    }
}

#[test]
fn eval_reproduces_last_train_accuracy() {
    let dir = TempDir::new().unwrap();
    let out = trained(dir.path());
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let last: f64 = metrics.lines().last().unwrap().split(',').nth(3).unwrap().parse().unwrap();
    let stdout = ok(&["eval", "--model", "out/last.dsta", "--data", "tr.skl", "--scores-out", "s.csv"], dir.path());
    assert_eq!(accuracy_line(&stdout), last);
    let scores = parse_scores_csv(&fs::read_to_string(dir.path().join("s.csv")).unwrap()).unwrap();
    assert_eq!(scores.shape(), &[12, 3]);
    for row in scores.data().chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn eval_rejects_empty_and_mismatched_data() {
    let dir = TempDir::new().unwrap();
    trained(dir.path());
    let d = dir.path();
    fs::write(d.join("empty.skl"), b"").unwrap();
    let err = fails(&["eval", "--model", "out/model.dsta", "--data", "empty.skl"], d);
    assert!(err.contains("format error"), "{err}");
    ok(&["gen-data", "--out", "long.skl", "--classes", "3", "--per-class", "1", "--frames", "12"], d);
    fails(&["eval", "--model", "out/model.dsta", "--data", "long.skl", "--scores-out", "s.csv"], d);
    assert!(!d.join("s.csv").exists());
    let err = fails(&["eval", "--model", "tr.skl", "--data", "tr.skl"], d);
    assert!(err.contains("format error"), "{err}");
}

#[test]
fn single_table_fusion_matches_eval() {
    let dir = TempDir::new().unwrap();
    trained(dir.path());
    let d = dir.path();
    let eval = accuracy_line(&ok(&["eval", "--model", "out/model.dsta", "--data", "va.skl", "--scores-out", "s.csv"], d));
    let fused = accuracy_line(&ok(&["fuse", "--scores", "s.csv", "--data", "va.skl", "--out", "f.csv"], d));
    assert_eq!(eval, fused);
    assert_eq!(fs::read(d.join("s.csv")).unwrap(), fs::read(d.join("f.csv")).unwrap());
}

fn write_scores(path: &Path, rows: &[Vec<f64>]) {
    fs::write(path, scores_csv(&Tensor::from_rows(rows).unwrap()).unwrap()).unwrap();
}

#[test]
fn two_stream_fusion_by_hand() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_scores(&d.join("a.csv"), &[vec![0.9, 0.1], vec![0.2, 0.8], vec![0.55, 0.45]]);
    write_scores(&d.join("b.csv"), &[vec![0.1, 0.9], vec![0.3, 0.7], vec![0.2, 0.8]]);
    // row 0: 0.6·0.9 + 0.4·0.1 = 0.58 vs 0.42 → 0
    // row 1: 0.24 vs 0.76 → 1
    // row 2: 0.41 vs 0.59 → 1
    let stdout = ok(&["fuse", "--scores", "a.csv", "b.csv", "--weights", "0.6,0.4", "--out", "f.csv"], d);
    assert_eq!(stdout, "sample,class\n0,0\n1,1\n2,1\n");
    let f = parse_scores_csv(&fs::read_to_string(d.join("f.csv")).unwrap()).unwrap();
    let want = Tensor::from_rows(&[vec![0.58, 0.42], vec![0.24, 0.76], vec![0.41, 0.59]]).unwrap();
    assert!(f.max_abs_diff(&want) < 1e-9);
    // joint 0.6 and joint-motion 0.4 by default
    let by_stream = ok(&["fuse", "--scores", "a.csv", "b.csv", "--streams", "joint,joint-motion"], d);
    assert_eq!(by_stream, stdout);
}

#[test]
fn fusion_input_errors() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_scores(&d.join("a.csv"), &[vec![0.9, 0.1], vec![0.2, 0.8]]);
    write_scores(&d.join("b.csv"), &[vec![0.1, 0.9]]);
    let err = fails(&["fuse", "--scores", "a.csv", "b.csv", "--weights", "1,1", "--out", "f.csv"], d);
    assert!(err.contains("input error"), "{err}");
    assert!(!d.join("f.csv").exists());
    fails(&["fuse", "--scores", "a.csv", "a.csv"], d);
    fails(&["fuse", "--scores", "a.csv", "--weights", "1,2"], d);
    fs::write(d.join("bad.csv"), "sample,score_0\n0,abc\n").unwrap();
    let err = fails(&["fuse", "--scores", "bad.csv"], d);
    assert!(err.contains("format error") && err.contains("bad.csv"), "{err}");
}

fn load_matrix(path: PathBuf) -> Tensor {
    parse_matrix_csv(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn inspect_constant_sample_tph_is_identity() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let frame: Vec<f64> = (0..3 * 25).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut data = Vec::new();
    for c in 0..3 {
        for _ in 0..6 {
            data.extend_from_slice(&frame[c * 25..(c + 1) * 25]);
        }
    }
    let s = SkeletonSample::new(0, Tensor::new(&[3, 6, 25], data).unwrap()).unwrap();
    let ds = Dataset::new(SkeletonId::Ntu25, 2, vec![s]).unwrap();
    write_skl(d.join("const.skl"), &ds).unwrap();
    ok(&["inspect", "--data", "const.skl", "--what", "tph", "--k", "1", "--out", "tph"], d);
    assert_eq!(load_matrix(d.join("tph/incidence.csv")), Tensor::identity(6));
    assert_eq!(load_matrix(d.join("tph/weights.csv")), Tensor::identity(6));
    assert!(load_matrix(d.join("tph/operator.csv")).max_abs_diff(&Tensor::identity(6)) < 1e-9);
}

#[test]
fn inspect_kmeans_with_one_cluster_per_joint_is_identity() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["gen-data", "--out", "u.skl", "--skeleton", "ucla20", "--classes", "2", "--per-class", "1"], d);
    ok(&["inspect", "--data", "u.skl", "--what", "spatial-kmeans", "--clusters", "20", "--out", "km"], d);
    assert_eq!(load_matrix(d.join("km/incidence.csv")), Tensor::identity(20));
}

#[test]
fn inspect_csv_round_trips() {
    let dir = TempDir::new().unwrap();
    trained(dir.path());
    let d = dir.path();
    for what in ["tph", "spatial-knn", "spatial-kmeans", "spatial-parts"] {
        ok(&["inspect", "--data", "tr.skl", "--what", what, "--out", what], d);
        let h = load_matrix(d.join(what).join("incidence.csv"));
        let op = load_matrix(d.join(what).join("operator.csv"));
        assert_eq!(op.shape()[0], h.shape()[0], "{what}");
        assert!(op.max_abs_diff(&op.transpose2().unwrap()) < 1e-8, "{what}");
    }
    let err = fails(&["inspect", "--data", "tr.skl", "--what", "cross", "--out", "cross"], d);
    assert!(err.contains("--model"), "{err}");
    ok(&["inspect", "--data", "tr.skl", "--what", "cross", "--model", "out/model.dsta", "--block", "1", "--out", "cross"], d);
    let h = load_matrix(d.join("cross/incidence.csv"));
    // the second block runs on 10 frames and halves them at its output
    assert_eq!(h.shape(), &[25, 10]);
    assert!(h.data().iter().all(|x| x.abs() < 1.0));
}

#[test]
fn export_features_shapes() {
    let dir = TempDir::new().unwrap();
    trained(dir.path());
    let d = dir.path();
    let rows = |name: &str| fs::read_to_string(d.join(name)).unwrap().lines().count() - 1;
    for (what, block, want) in [("a", "0", 8 * 10), ("c", "0", 8 * 10), ("hif", "0", 8 * 10), ("f-out", "1", 8 * 10), ("z-out", "1", 8 * 5)] {
        let name = format!("{what}{block}.csv");
        ok(&["export-features", "--model", "out/model.dsta", "--data", "tr.skl", "--what", what, "--block", block, "--out", &name], d);
        assert_eq!(rows(&name), want, "{what}");
    }
    fails(&["export-features", "--model", "out/model.dsta", "--data", "tr.skl", "--what", "a", "--block", "2", "--out", "x.csv"], d);
    fails(&["export-features", "--model", "out/model.dsta", "--data", "tr.skl", "--what", "a", "--sample", "99", "--out", "x.csv"], d);
    assert!(!d.join("x.csv").exists());
}

#[test]
fn threads_flag_and_environment() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["--threads", "2", "gen-data", "--out", "a.skl", "--classes", "2", "--per-class", "1"], d);
    let out = Command::new(env!("CARGO_BIN_EXE_dsthcn"))
        .args(["gen-data", "--out", "b.skl"])
        .current_dir(d)
        .env("DSTHCN_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("DSTHCN_THREADS"));
}
