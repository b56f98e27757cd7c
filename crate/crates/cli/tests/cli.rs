use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmu-eval"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["kss", "--case", "3", "-i", "x.jsonl"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["evaluate", "--input", "missing.jsonl"], dir.path())
            .status
            .code(),
        Some(2)
    );
    let out = run(
        &["sweep", "--param", "bogus", "--values", "0.1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn unreachable_service_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("clients.toml"),
        "[judge]\nbase_url = \"http://127.0.0.1:9\"\ntimeout_secs = 2\nmax_retries = 0\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("cells.jsonl"),
        "{\"instance_id\":\"a\",\"language\":\"en\",\"model_output\":\"x\",\"ground_truth\":\"y\"}\n",
    )
    .unwrap();
    let out = run(
        &[
            "judge",
            "--input",
            "cells.jsonl",
            "--config",
            "clients.toml",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(
        &[
            "simulate",
            "--seed",
            "3",
            "--set",
            "spread_rate=0.2",
            "--out",
            "run"
        ],
        dir.path()
    )
    .status
    .success());
    for f in [
        "records.jsonl",
        "manifest.json",
        "truth.jsonl",
        "scenario.json",
    ] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let out = run(
        &["kss", "-i", "NPO=run/records.jsonl", "--format", "csv"],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(
        csv.starts_with("method,mode,metric,ratio,case,value"),
        "{csv}"
    );
    assert_eq!(
        csv.lines().filter(|l| l.starts_with("NPO,")).count(),
        8,
        "{csv}"
    );
}
