//! End-to-end checks of the `blockgt` binary: exit codes, output files, and
//! worker-count-independent determinism.

use std::path::Path;
use std::process::Command;

const EXE: &str = env!("CARGO_BIN_EXE_blockgt");

const CONFIG: &str = r#"
algorithm = "drbsgt"
master_seed = 11
paths = 3
horizon = 400

[graph]
kind = "ring"
agents = 5

[schedule]
gamma = 8.5
big-gamma = 500.0

[objective]
kind = "quadratic"
dim = 16
blocks = 4
mu = 1.0
lip = 4.0
noise = 0.1

[compare]
algorithms = ["drbsgt", "dsgt", "atc"]
budget = 2000
"#;

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(&path, CONFIG).unwrap();
    path
}

#[test]
fn selftest_passes() {
    let out = Command::new(EXE).arg("selftest").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches("[PASS]").count(), 3, "{text}");
}

#[test]
fn validate_prints_schedule_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = Command::new(EXE)
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("measured rho"), "{text}");
    assert!(text.contains("all conditions: ok"), "{text}");
}

#[test]
fn run_writes_outputs_and_is_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    for (sub, workers) in [("one", "1"), ("many", "4")] {
        let out = Command::new(EXE)
            .args(["run", "--quiet", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(sub))
            .env("BLOCKGT_WORKERS", workers)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{out:?}");
    }
    for file in ["series.csv", "aggregate.csv", "summary.txt", "schedule_report.txt"] {
        assert!(dir.path().join("one").join(file).exists(), "missing {file}");
    }
    for file in ["series.csv", "aggregate.csv"] {
        let a = std::fs::read(dir.path().join("one").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("many").join(file)).unwrap();
        assert_eq!(a, b, "{file} depends on the worker count");
    }
}

#[test]
fn seed_override_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    for (sub, seed) in [("a", "1"), ("b", "2")] {
        let status = Command::new(EXE)
            .args(["run", "--quiet", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(sub))
            .args(["--seed", seed])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir.path().join("a/series.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/series.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn compare_writes_comparison_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = Command::new(EXE)
        .args(["compare", "--quiet", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("cmp"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(dir.path().join("cmp/comparison.csv").exists());
    assert!(dir.path().join("cmp/comparison_summary.txt").exists());
    for alg in ["drbsgt", "dsgt", "atc"] {
        assert!(dir.path().join("cmp").join(alg).join("series.csv").exists());
    }
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = Command::new(EXE)
        .args(["run", "--config", "/nonexistent/exp.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("/nonexistent/exp.toml"), "{text}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = Command::new(EXE).args(["run", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, CONFIG.replace("master_seed = 11", "master_seed = 11\nwidgets = 3")).unwrap();
    let out = Command::new(EXE)
        .args(["run", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("widgets"), "{text}");
}

#[test]
fn help_exits_zero() {
    let out = Command::new(EXE).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
