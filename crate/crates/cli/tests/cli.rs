use std::path::PathBuf;
use std::process::{Command, Output};

fn exactpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exactpf")).args(args).output().unwrap()
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("exactpf-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_then_filter_round_trip() {
    let dir = scratch_dir("roundtrip");
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        "seed = 7\n[dataset]\nsource = \"sine\"\nt_end = 10.0\ndelta = 1.0\nsigma = 0.2\n\
         [filter]\nn_particles = 100\nproposal = \"ozaki\"\n",
    )
    .unwrap();
    let data = dir.join("sine.csv");
    let out = exactpf(&["--config", config.to_str().unwrap(), "--out", data.to_str().unwrap(), "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.exists());
    assert!(dir.join("sine.truth.csv").exists());

    let out = exactpf(&[
        "--config",
        config.to_str().unwrap(),
        "filter",
        "--data",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("step,time,"));
    assert_eq!(lines.count(), 10);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn estimate_emits_json_and_is_reproducible() {
    let args = ["--seed", "3", "--format", "json", "estimate", "--draws", "500", "--xt", "1.0"];
    let first = exactpf(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = exactpf(&args);
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("\"statistic\": \"mean_kappa\"") || text.contains("\"statistic\":\"mean_kappa\""));
}

#[test]
fn missing_seed_is_an_error() {
    let out = exactpf(&["estimate", "--draws", "10"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}
