use std::path::{Path, PathBuf};
use std::process::Command;

use rareloom::harness::{parse_csv, parse_jsonl};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rareloom"))
}

fn densities() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/densities")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let density = densities().join("two_step.toml");
    std::fs::write(&path, format!("density = {:?}\n{body}", density.display().to_string())).unwrap();
    path
}

const SWEEP: &str = r#"
n_grid = [200, 2000]
seeds = [4, 5]
quantities = ["alphabet", "gt_ks"]
betas = [0.0, 0.4]
output = "out/run.jsonl"

[estimator]
kind = "npmle"
"#;

#[test]
fn estimate_writes_matching_jsonl_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWEEP);
    let status = bin().args(["estimate", "--config"]).arg(&cfg).status().unwrap();
    assert!(status.success());
    let jsonl = std::fs::read_to_string(dir.path().join("out/run.jsonl")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("out/run.csv")).unwrap();
    let rows = parse_jsonl(&jsonl).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(parse_csv(&csv).unwrap(), rows);
    assert!(rows.iter().all(|r| r.runtime_ms.is_some_and(|t| t > 0.0)));
    let keys: Vec<_> = rows.iter().map(|r| (r.n, r.seed, r.quantity.clone())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);

    let out = bin().args(["rates", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("quantity,n,seeds,mean_abs_error,scaled_beta_0,scaled_beta_0.4"));
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWEEP);
    let out = dir.path().join("other.jsonl");
    let status = bin()
        .args(["estimate", "--quantity", "mixing_wass", "--estimator", "mindist", "--seed-offset", "100", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = parse_jsonl(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.quantity == "mixing_wass" && r.estimator == "mindist" && r.seed > 100));
}

#[test]
fn simulate_reports_sources() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWEEP);
    let out = bin().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0]["alphabet_size"], 200);
    assert_eq!(lines[0]["limit"], serde_json::json!([[0.5, 0.25], [1.5, 0.75]]));
}

#[test]
fn failures_exit_nonzero_with_a_structured_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SWEEP.replace("seeds = [4, 5]", "seeds = [4, 4]"));
    let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let line: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(line["error"]["kind"], "config");
    assert!(line["error"]["message"].as_str().unwrap().contains("seeds"));

    let out = bin().args(["estimate", "--config", "/nonexistent.toml"]).output().unwrap();
    assert!(!out.status.success());
    let line: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(line["error"]["kind"], "io");

    let out = bin()
        .args(["estimate", "--config"])
        .arg(write_config(dir.path(), SWEEP))
        .env("RARELOOM_THREADS", "many")
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn thread_cap_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("record_timing = false\n{SWEEP}"));
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .args(["estimate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .env("RARELOOM_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("1", "a.jsonl"), run("0", "b.jsonl"));
}
