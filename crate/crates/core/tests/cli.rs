use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fairprice::metrics::read_csv;
use fairprice::runner::{summarize, OUT_ENV};

fn fairprice(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fairprice"));
    cmd.args(args).env_remove(OUT_ENV);
    if let Some(dir) = out_env {
        cmd.env(OUT_ENV, dir);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_presets_names_all_five() {
    let o = fairprice(&["list-presets"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for i in 1..=5 {
        assert!(text.contains(&format!("exp{i}")), "{text}");
    }
}

#[test]
fn run_writes_per_seed_artifacts_and_summary() {
    let out = tempfile::tempdir().unwrap();
    let o = fairprice(
        &[
            "run",
            "exp4",
            "--epochs",
            "3",
            "--bids",
            "40",
            "--seeds",
            "2",
            "--seed",
            "10",
            "--log-transitions",
            "--out",
        ]
        .iter()
        .copied()
        .chain([out.path().to_str().unwrap()])
        .collect::<Vec<_>>(),
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = out.path().join("exp4");
    for seed in [10, 11] {
        let rows = read_csv(&dir.join(format!("seed-{seed}.csv"))).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(dir.join(format!("seed-{seed}.weights")).exists());
        let log = fs::read_to_string(dir.join(format!("seed-{seed}.transitions.ndjson"))).unwrap();
        assert_eq!(log.lines().count(), 3 * 40);
        let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
        assert_eq!(first["epoch"], 0);
        assert_eq!(first["iteration"], 1);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"], serde_json::json!([10, 11]));
    let recomputed = serde_json::to_value(summarize("exp4", &dir, &[10, 11]).unwrap()).unwrap();
    assert_eq!(summary, recomputed);
}

#[test]
fn output_root_comes_from_environment() {
    let out = tempfile::tempdir().unwrap();
    let o = fairprice(&["run", "exp5", "--epochs", "2", "--bids", "10", "--seed", "1"], Some(out.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.path().join("exp5").join("seed-1.csv").exists());
    assert!(!out.path().join("exp5").join("seed-2.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = fairprice(
            &["run", "exp3", "--epochs", "5", "--bids", "100", "--seed", "42", "--sequential"],
            Some(dir.path()),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let x = fs::read(a.path().join("exp3/seed-42.csv")).unwrap();
    let y = fs::read(b.path().join("exp3/seed-42.csv")).unwrap();
    assert_eq!(x, y);
    let x = fs::read(a.path().join("exp3/seed-42.weights")).unwrap();
    let y = fs::read(b.path().join("exp3/seed-42.weights")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn custom_config_file_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.json");
    fs::write(
        &config,
        r#"{
            "name": "small",
            "agent": {"epochs": 4, "bids": 60},
            "reward": {"beta_price": 1.0, "beta_fairness": 1.0, "target_fairness": 0.8},
            "seeds": [5]
        }"#,
    )
    .unwrap();
    let o = fairprice(&["run", config.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let weights = dir.path().join("small/seed-5.weights");
    assert!(weights.exists());

    let o = fairprice(
        &["evaluate", weights.to_str().unwrap(), config.to_str().unwrap(), "--epochs", "2"],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["epochs"], 2);
    assert_eq!(report["means"]["group_means"].as_array().unwrap().len(), 4);
}

#[test]
fn config_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"reward": {"sigma_price": 0}}"#).unwrap();
    let o = fairprice(&["run", bad.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("reward.sigma_price"), "{}", stderr(&o));

    fs::write(&bad, "{ not json").unwrap();
    let o = fairprice(&["run", bad.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(1));

    let o = fairprice(&["run", "no-such-preset"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(1));

    let o = fairprice(&["run", "exp1", "--seeds", "0"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(1));

    let o = fairprice(&["frobnicate"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn io_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // a regular file where the output directory should go
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let o = fairprice(
        &["run", "exp1", "--epochs", "1", "--bids", "5", "--seed", "1", "--out", blocker.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let garbage = dir.path().join("weights");
    fs::write(&garbage, "not a checkpoint").unwrap();
    let o = fairprice(&["evaluate", garbage.to_str().unwrap(), "exp1"], None);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = fairprice(&["evaluate", dir.path().join("absent").to_str().unwrap(), "exp1"], None);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn diverging_training_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("boom.json");
    fs::write(
        &config,
        r#"{"name": "boom", "agent": {"epochs": 2, "bids": 50, "learning_rate": 1e308}, "seeds": [1]}"#,
    )
    .unwrap();
    let o = fairprice(&["run", config.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("training fault"));
}
