use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use acpa_eeg::dsp::load_features;

fn acpa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acpa-eeg"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn no_arguments_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = acpa(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = acpa(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("bench-net"));
}

#[test]
fn simulate_is_deterministic_and_preprocess_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for name in ["a.raw", "b.raw"] {
        let out = acpa(d, &["simulate", "--seed", "7", "--duration", "60", "--class", "calmness", "-o", name]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(d.join("a.raw")).unwrap(), fs::read(d.join("b.raw")).unwrap());
    assert_eq!(fs::read(d.join("a.raw.truth")).unwrap(), fs::read(d.join("b.raw.truth")).unwrap());

    let out = acpa(d, &["preprocess", "a.raw", "-o", "a.feat"]);
    assert!(out.status.success());
    let feats = load_features(&d.join("a.feat")).unwrap();
    // 60 s at 250 Hz after a 2 s lead-in holds six 2240-sample epochs.
    assert_eq!(feats.len(), 6);
    assert!(feats.iter().all(|f| f.shape() == [8, 16, 63]));
    assert!(feats.iter().all(|f| f.label.map(|l| l.name()) == Some("calmness")));

    let other = acpa(d, &["simulate", "--seed", "8", "--duration", "60", "--class", "calmness", "-o", "c.raw"]);
    assert!(other.status.success());
    assert_ne!(fs::read(d.join("a.raw")).unwrap(), fs::read(d.join("c.raw")).unwrap());
}

#[test]
fn unlabelled_without_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(acpa(d, &["simulate", "--duration", "12", "-o", "s.raw"]).status.success());
    fs::remove_file(d.join("s.raw.truth")).unwrap();
    assert!(acpa(d, &["preprocess", "s.raw", "-o", "s.feat"]).status.success());
    let feats = load_features(&d.join("s.feat")).unwrap();
    assert_eq!(feats.len(), 1);
    assert_eq!(feats[0].label, None);
    // Training needs labels: runtime error.
    let out = acpa(d, &["train", "s.feat", "-o", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.cfg"), "# test\nseed = 3\nsim.duration = 20\ntrain.epochs = 4\n").unwrap();
    let out = acpa(d, &["--config", "run.cfg", "--show-config", "simulate", "--seed", "9", "-o", "x.raw"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let line = |key: &str| {
        text.lines()
            .find(|l| l.split_whitespace().next() == Some(key))
            .unwrap_or_else(|| panic!("{key} missing"))
            .to_string()
    };
    assert!(line("seed").contains("= 9") && line("seed").ends_with("# flag"));
    assert!(line("sim.duration").contains("= 20") && line("sim.duration").ends_with("# file"));
    assert!(line("train.lr").ends_with("# default"));
    assert!(!d.join("x.raw").exists());
}

#[test]
fn config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.cfg"), "sim.durration = 20\n").unwrap();
    let out = acpa(d, &["--config", "bad.cfg", "simulate", "-o", "x.raw"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("sim.durration"));

    let out = acpa(d, &["simulate", "--class", "elation", "-o", "x.raw"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (class, seed) in [("sorrow", "1"), ("calmness", "2")] {
        let raw = format!("{class}.raw");
        assert!(acpa(d, &["simulate", "--seed", seed, "--duration", "40", "--class", class, "-o", &raw]).status.success());
        assert!(acpa(d, &["preprocess", &raw, "-o", &format!("{class}.feat")]).status.success());
    }
    let tiny = [
        "--set", "model.stem_channels=4", "--set", "model.stages=4x1", "--set", "model.cbam_reduction=2",
        "--set", "model.fc_hidden=8", "--set", "train.epochs=1", "--set", "train.folds=2",
    ];
    let mut args: Vec<&str> = tiny.to_vec();
    args.extend(["train", "sorrow.feat", "calmness.feat", "--no-cv", "-o", "m.ckpt", "--report", "r.txt"]);
    let out = acpa(d, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(d.join("r.txt")).unwrap();
    assert!(report.contains("folds = 1"));
    assert!(report.contains("model.stages = 4x1"));

    let out = acpa(d, &["eval", "m.ckpt", "sorrow.feat", "--report", "e.txt"]);
    assert!(out.status.success());
    let e = fs::read_to_string(d.join("e.txt")).unwrap();
    let total: u64 = e
        .lines()
        .filter(|l| l.starts_with("confusion."))
        .map(|l| l.rsplit('=').next().unwrap().trim().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 4);

    let out = acpa(d, &["eval", "sorrow.feat", "sorrow.feat"]);
    assert_eq!(out.status.code(), Some(2));
}
