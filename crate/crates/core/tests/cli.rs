use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use koopman_clf::falsifier::{Certificate, Outcome};
use koopman_clf::formats::Checkpoint;

fn bin(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_koopman-clf")).arg("--out").arg(out).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Overrides that make a run small enough for a unit-test budget.
const TINY: &[&str] =
    &["n_snapshots=200", "traj_len=20", "lifted_dim=4", "encoder_hidden=4", "clf_hidden=4", "decoder_hidden=6", "budget=3000"];

fn tiny_train(out: &Path, plant: &str, epochs: &str) -> Output {
    let mut args = vec!["train", "--plant", plant, "--generate", "--epochs", epochs, "--max-rounds", "1"];
    for kv in TINY {
        args.extend(["--set", kv]);
    }
    bin(out, &args)
}

#[test]
fn generate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = bin(d.path(), &["generate", "--plant", "pendulum", "--n", "300", "--seed", "4"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["dataset.csv", "dataset.meta"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let csv = fs::read_to_string(a.path().join("dataset.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("k,x1,x2,u1"));
    assert_eq!(csv.lines().count(), 301);
}

#[test]
fn unknown_plant_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let o = bin(d.path(), &["generate", "--plant", "nosuch"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nosuch"));
    assert!(!d.path().join("dataset.csv").exists());
}

#[test]
fn malformed_config_reports_its_line() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    fs::write(&cfg, "plant = pendulum\n# comment\nlr = 1e-3\nepochs = many\n").unwrap();
    let o = bin(d.path(), &["train", "--config", cfg.to_str().unwrap(), "--generate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    fs::write(&cfg, "plant = pendulum\nnot a pair\n").unwrap();
    let o = bin(d.path(), &["train", "--config", cfg.to_str().unwrap(), "--generate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn train_without_dataset_fails() {
    let d = tempfile::tempdir().unwrap();
    let o = bin(d.path(), &["train", "--plant", "pendulum"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_verify_and_simulate() {
    let d = tempfile::tempdir().unwrap();
    let o = tiny_train(d.path(), "pendulum", "20");
    let code = o.status.code();
    assert!(matches!(code, Some(0) | Some(2)), "{}", stderr(&o));
    for f in ["config.txt", "checkpoint.json", "certificate.txt", "training_log.csv", "round_log.csv", "model_kd.csv", "model_b1.csv"] {
        assert!(d.path().join(f).exists(), "missing {f}");
    }
    assert!(d.path().join("rounds/checkpoint_round_01.json").exists());
    let log = fs::read_to_string(d.path().join("training_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 21);

    let cert = Certificate::parse(&fs::read_to_string(d.path().join("certificate.txt")).unwrap()).unwrap();
    assert_eq!(code == Some(0), cert.outcome == Outcome::Unsat);

    // verification of a checkpoint is repeatable and matches training
    let first = bin(d.path(), &["verify"]);
    let text1 = fs::read_to_string(d.path().join("certificate_verify.txt")).unwrap();
    let second = bin(d.path(), &["verify"]);
    let text2 = fs::read_to_string(d.path().join("certificate_verify.txt")).unwrap();
    assert_eq!(first.status.code(), second.status.code());
    assert_eq!(first.status.code(), code);
    assert_eq!(text1, text2);
    assert_eq!(Certificate::parse(&text1).unwrap(), cert);

    let ck = Checkpoint::from_json(&fs::read_to_string(d.path().join("checkpoint.json")).unwrap()).unwrap();
    assert_eq!(ck.plant, "pendulum");
    assert_eq!(ck.lifted_dim, 4);

    if cert.outcome != Outcome::Unsat {
        let o = bin(d.path(), &["simulate"]);
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains("--force"));
    }
    let o = bin(d.path(), &["simulate", "--force", "--n-initial", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(d.path().join("simulate/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1);

    let o = bin(d.path(), &["simulate", "--force", "--n-initial", "3", "--horizon", "0.5", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for i in 0..3 {
        let rollout = fs::read_to_string(d.path().join(format!("simulate/rollout_{i:03}.csv"))).unwrap();
        assert!(rollout.lines().count() >= 2);
    }
    let o = bin(d.path(), &["simulate", "--uncontrolled", "--n-initial", "2", "--horizon", "0.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("checkpoint.json"), "{\"plant\": \"pendulum\"").unwrap();
    assert_eq!(bin(d.path(), &["verify"]).status.code(), Some(1));
    assert_eq!(bin(d.path(), &["simulate", "--force"]).status.code(), Some(1));
}

fn losses_decrease(dir: &Path) {
    let log = fs::read_to_string(dir.join("training_log.csv")).unwrap();
    let totals: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(6).unwrap().parse().unwrap()).collect();
    assert!(totals.len() > 1);
    assert!(totals.last().unwrap() < totals.first().unwrap(), "{totals:?}");
}

fn smoke(plant: &str) {
    let d = tempfile::tempdir().unwrap();
    let o = tiny_train(d.path(), plant, "40");
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    losses_decrease(d.path());
    let o = bin(d.path(), &["simulate", "--force", "--n-initial", "2", "--horizon", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(d.path().join("simulate/rollout_001.csv").exists());
    assert!(d.path().join("simulate/phase.csv").exists());
}

#[test]
fn cartpole_smoke() {
    smoke("cartpole");
}

#[test]
fn hcw_smoke() {
    smoke("hcw");
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(bin(d.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(bin(d.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(bin(d.path(), &[]).status.code(), Some(1));
}
