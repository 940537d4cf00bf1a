use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sidkit::bank::read_bank;
use sidkit::metrics::read_report_json;
use sidkit::probe::load_probe;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sidkit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn spec(backbone: &str, dim: usize, clusters: &[(&str, &str, f64, f64, usize)]) -> String {
    let body: Vec<String> = clusters
        .iter()
        .map(|(label, tag, mean, sd, n)| {
            format!(r#"{{"label": "{label}", "generator_tag": "{tag}", "mean": {mean}, "stddev": {sd}, "count": {n}}}"#)
        })
        .collect();
    format!(r#"{{"dim": {dim}, "seed": 5, "backbone_id": "{backbone}", "clusters": [{}]}}"#, body.join(", "))
}

/// Temp dir holding `two.ebank` (tags progan/ldm, dim 4) and `other.ebank` (same ids, dim 3).
fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_path_buf();
    let clusters = [
        ("real", "progan", -1.0, 1.0, 20),
        ("fake", "progan", 1.0, 1.0, 20),
        ("real", "ldm", -0.5, 1.0, 15),
        ("fake", "ldm", 0.5, 1.0, 15),
    ];
    fs::write(d.join("two.json"), spec("clip", 4, &clusters)).unwrap();
    fs::write(d.join("other.json"), spec("dino", 3, &clusters)).unwrap();
    assert_eq!(code(&run(&d, &["synth", "--spec", "two.json", "--out", "two.ebank"])), 0);
    assert_eq!(code(&run(&d, &["synth", "--spec", "other.json", "--out", "other.ebank"])), 0);
    (dir, d)
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["--help"])), 0);
    assert_eq!(code(&run(d.path(), &["--version"])), 0);
    assert_eq!(code(&run(d.path(), &["train", "--help"])), 0);
}

#[test]
fn usage_errors_exit_64() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &[])), 64);
    assert_eq!(code(&run(d.path(), &["frobnicate"])), 64);
    assert_eq!(code(&run(d.path(), &["train", "--out", "p.json"])), 64);
    assert_eq!(code(&run(d.path(), &["eval", "--probe", "p.json", "--bank", "b", "--report", "r", "--format", "xml"])), 64);
    assert_eq!(code(&run(d.path(), &["fuse", "--banks", "only_one", "--out", "f"])), 64);
}

#[test]
fn synth_writes_a_readable_bank() {
    let (_t, d) = workspace();
    let bank = read_bank(d.join("two.ebank")).unwrap();
    assert_eq!(bank.len(), 70);
    assert_eq!(bank.dim(), 4);
    assert_eq!(bank.generator_tags(), vec!["progan", "ldm"]);
}

#[test]
fn synth_accepts_toml_specs() {
    let d = tempfile::tempdir().unwrap();
    let toml = "dim = 2\nseed = 1\n\n[[clusters]]\nlabel = \"real\"\ngenerator_tag = \"g\"\nmean = [0.0, 1.0]\nstddev = 0.5\ncount = 3\n";
    fs::write(d.path().join("s.toml"), toml).unwrap();
    let out = run(d.path(), &["synth", "--spec", "s.toml", "--out", "s.ebank"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read_bank(d.path().join("s.ebank")).unwrap().backbone_id(), "synthetic");
}

#[test]
fn synth_rejects_negative_stddev_naming_the_cluster() {
    let d = tempfile::tempdir().unwrap();
    let bad = spec("x", 2, &[("real", "progan", 0.0, 1.0, 3), ("fake", "glide", 0.0, -1.0, 3)]);
    fs::write(d.path().join("bad.json"), bad).unwrap();
    let out = run(d.path(), &["synth", "--spec", "bad.json", "--out", "bad.ebank"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cluster 1 (glide)"), "{}", stderr(&out));
    assert!(!d.path().join("bad.ebank").exists());
}

#[test]
fn missing_input_is_an_io_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["synth", "--spec", "nope.json", "--out", "o.ebank"])), 3);
    assert_eq!(code(&run(d.path(), &["train", "--bank", "nope.ebank", "--out", "p.json"])), 3);
    assert_eq!(code(&run(d.path(), &["project", "--bank", "nope.ebank", "--out", "p.csv"])), 3);
}

#[test]
fn train_then_eval_round_trip() {
    let (_t, d) = workspace();
    let out = run(&d, &["train", "--bank", "two.ebank", "--out", "p.json", "--epochs", "30", "--lr", "0.05"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("train_loss "));
    let probe = load_probe(d.join("p.json")).unwrap();
    assert_eq!(probe.dim(), 4);
    assert_eq!(probe.trained_on(), "progan,ldm");
    assert_eq!(probe.input_backbones(), ["clip".to_string()]);

    let out = run(&d, &["eval", "--probe", "p.json", "--bank", "two.ebank", "--report", "r.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_report_json(d.join("r.json")).unwrap();
    assert_eq!(report.config_digest, probe.config_digest());
    assert!(report.map > 0.7, "mAP {}", report.map);
    assert!(stdout(&out).starts_with("mAP "));
}

#[test]
fn zero_epochs_saves_the_zero_probe() {
    let (_t, d) = workspace();
    let out = run(&d, &["train", "--bank", "two.ebank", "--out", "z.json", "--epochs", "0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let probe = load_probe(d.join("z.json")).unwrap();
    assert!(probe.weights().iter().all(|w| *w == 0.0));
    assert_eq!(probe.bias(), 0.0);
    let loss: f64 = stdout(&out)
        .lines()
        .find_map(|l| l.strip_prefix("train_loss "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn train_rejects_single_class_bank() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("s.json"), spec("x", 2, &[("real", "g", 0.0, 1.0, 5)])).unwrap();
    assert_eq!(code(&run(d.path(), &["synth", "--spec", "s.json", "--out", "s.ebank"])), 0);
    let out = run(d.path(), &["train", "--bank", "s.ebank", "--out", "p.json"]);
    assert_eq!(code(&out), 2);
    assert!(!d.path().join("p.json").exists());
}

#[test]
fn config_file_and_overrides_change_the_digest() {
    let (_t, d) = workspace();
    fs::write(d.join("run.toml"), "[train]\nepochs = 3\nlearning_rate = 0.01\n").unwrap();
    let digest = |args: &[&str]| {
        let mut full = vec!["train", "--bank", "two.ebank", "--out", "p.json"];
        full.extend_from_slice(args);
        let out = run(&d, &full);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        load_probe(d.join("p.json")).unwrap().config_digest().to_string()
    };
    let from_file = digest(&["--config", "run.toml"]);
    let same_by_flags = digest(&["--epochs", "3", "--set", "train.learning_rate=0.01"]);
    let overridden = digest(&["--config", "run.toml", "--epochs", "4"]);
    assert_eq!(from_file, same_by_flags);
    assert_ne!(from_file, overridden);

    let out = run(&d, &["train", "--bank", "two.ebank", "--out", "p.json", "--set", "train.epoch=3"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("epoch"));
}

#[test]
fn eval_csv_has_one_row_per_tag_plus_total() {
    let (_t, d) = workspace();
    assert_eq!(code(&run(&d, &["train", "--bank", "two.ebank", "--out", "p.json", "--epochs", "5"])), 0);
    let out = run(&d, &["eval", "--probe", "p.json", "--bank", "two.ebank", "--report", "r.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(d.join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "tag,ap,real_acc,fake_acc,balanced_acc,n_real,n_fake");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("progan,") && lines[2].starts_with("ldm,") && lines[3].starts_with("TOTAL,"));

    // mAP recomputed from the per-tag rows
    let ap = |line: &str| line.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    let printed: f64 = stdout(&out).split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(((ap(lines[1]) + ap(lines[2])) / 2.0 - printed).abs() < 1e-6);
    assert!((ap(lines[3]) - printed).abs() < 1e-6);
}

#[test]
fn eval_rejects_dim_mismatch_and_one_sided_tags() {
    let (_t, d) = workspace();
    assert_eq!(code(&run(&d, &["train", "--bank", "two.ebank", "--out", "p.json", "--epochs", "1"])), 0);
    assert_eq!(code(&run(&d, &["eval", "--probe", "p.json", "--bank", "other.ebank", "--report", "r.json"])), 2);

    fs::write(d.join("lop.json"), spec("clip", 4, &[("real", "progan", 0.0, 1.0, 4), ("fake", "progan", 1.0, 1.0, 4), ("fake", "dalle", 1.0, 1.0, 4)])).unwrap();
    assert_eq!(code(&run(&d, &["synth", "--spec", "lop.json", "--out", "lop.ebank"])), 0);
    let out = run(&d, &["eval", "--probe", "p.json", "--bank", "lop.ebank", "--report", "r.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dalle"), "{}", stderr(&out));
}

#[test]
fn fuse_prints_summed_dim_and_checks_ids() {
    let (_t, d) = workspace();
    let out = run(&d, &["fuse", "--banks", "two.ebank", "other.ebank", "--out", "f.ebank"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "dim 7");
    let fused = read_bank(d.join("f.ebank")).unwrap();
    assert_eq!(fused.dim(), 7);
    assert_eq!(fused.backbone_id(), "clip+dino");

    assert_eq!(code(&run(&d, &["fuse", "--banks", "two.ebank", "two.ebank", "--out", "g.ebank"])), 2);
    let out = run(&d, &["fuse", "--banks", "two.ebank", "two.ebank", "--out", "g.ebank", "--allow-duplicate-backbones"]);
    assert_eq!(code(&out), 0);

    fs::write(d.join("short.json"), spec("vit", 2, &[("real", "progan", 0.0, 1.0, 20)])).unwrap();
    assert_eq!(code(&run(&d, &["synth", "--spec", "short.json", "--out", "short.ebank"])), 0);
    let out = run(&d, &["fuse", "--banks", "two.ebank", "short.ebank", "--out", "h.ebank"]);
    assert_eq!(code(&out), 2);
    assert!(!d.join("h.ebank").exists());
}

#[test]
fn project_writes_one_row_per_record() {
    let (_t, d) = workspace();
    let out = run(&d, &["project", "--bank", "two.ebank", "--out", "p.csv", "--n-epochs", "20", "--metric", "euclidean"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(d.join("p.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "id,x,y,label,generator_tag");
    assert_eq!(csv.lines().count(), 71);

    let out = run(&d, &["project", "--bank", "two.ebank", "--out", "s.csv", "--sample", "40", "--seed", "2", "--n-epochs", "20"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(d.join("s.csv")).unwrap().lines().count(), 41);

    assert_eq!(code(&run(&d, &["project", "--bank", "two.ebank", "--out", "x.csv", "--sample", "500"])), 2);
    assert_eq!(code(&run(&d, &["project", "--bank", "two.ebank", "--out", "x.csv", "--n-neighbors", "70"])), 2);
}

#[test]
fn commands_leave_inputs_untouched() {
    let (_t, d) = workspace();
    let before = fs::read(d.join("two.ebank")).unwrap();
    assert_eq!(code(&run(&d, &["train", "--bank", "two.ebank", "--val", "two.ebank", "--out", "p.json", "--epochs", "2"])), 0);
    let probe_before = fs::read(d.join("p.json")).unwrap();
    assert_eq!(code(&run(&d, &["eval", "--probe", "p.json", "--bank", "two.ebank", "--report", "r.json"])), 0);
    assert_eq!(code(&run(&d, &["fuse", "--banks", "two.ebank", "other.ebank", "--out", "f.ebank"])), 0);
    assert_eq!(code(&run(&d, &["project", "--bank", "two.ebank", "--out", "x.csv", "--n-epochs", "5"])), 0);
    assert_eq!(fs::read(d.join("two.ebank")).unwrap(), before);
    assert_eq!(fs::read(d.join("p.json")).unwrap(), probe_before);
}
