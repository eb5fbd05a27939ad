use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mfpmp::pmp::{self, SweepOptions};
use mfpmp::problems::{build, Params};
use mfpmp::TimeGrid;
use mfpmp_cli::output::{read_rows, IterationRow, LabelRow, TrajectoryRow};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfpmp"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run_config(config: &Path, out: &Path) -> Output {
    bin()
        .arg("run")
        .arg(config)
        .arg("--output-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SMALL: &str = r#"
schema_version = 1
seed = 5
[problem]
id = "model_case"
params = { lambda = 0.5 }
[particles]
n = [4, 8]
steps = 10
[solver]
method = "both"
[diagnostics]
trials = 4
"#;

#[test]
fn shipped_model_case_small_reports_five_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config(&shipped("model_case_small.toml"), tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report = std::fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert!(lines.next().unwrap().starts_with("n,status,iterations,cost"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    let sizes: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(sizes, ["8", "16", "32", "64", "128"]);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("converged")));

    let m = manifest(tmp.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["seed"], 0);
    assert!(m["wall_seconds"]["total"].as_f64().unwrap() > 0.0);
    assert_eq!(m["solves"].as_array().unwrap().len(), 5);
}

#[test]
fn missing_seed_is_a_schema_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "noseed.toml", &SMALL.replace("seed = 5", ""));
    let out = run_config(&config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed"), "{stderr}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn schema_errors_report_the_nested_path() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "bad.toml", &SMALL.replace("trials = 4", "trials = \"four\""));
    let out = run_config(&config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diagnostics.trials"));

    let config = write_config(tmp.path(), "order.toml", &SMALL.replace("n = [4, 8]", "n = [8, 4]"));
    let out = run_config(&config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("particles.n"));
}

#[test]
fn identical_configs_give_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "small.toml", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = run_config(&config, dir);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["trajectories.csv", "sweep.csv", "report.csv"] {
        let left = std::fs::read(a.join(name)).unwrap();
        assert!(!left.is_empty(), "{name} is empty");
        assert_eq!(left, std::fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config"], mb["config"]);
    assert_eq!(ma["solves"].as_array().unwrap().len(), 4);
}

#[test]
fn trajectories_round_trip_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "small.toml", SMALL);
    let summary = mfpmp_cli::run(&config, Some(&tmp.path().join("out"))).unwrap();
    let rows: Vec<TrajectoryRow> = read_rows(&summary.output_dir.join("trajectories.csv")).unwrap();

    let params: Params = [("lambda".to_string(), 0.5)].into();
    let p = build("model_case", &params).unwrap().spec().clone();
    let grid = TimeGrid::for_problem(&p, 10).unwrap();
    let mut checked = 0;
    for n in [4, 8] {
        let solved = pmp::forward_backward_sweep(&p, &p.sample_initial(n, 5), &grid, &SweepOptions::default()).unwrap();
        for row in rows.iter().filter(|r| r.solver == "sweep" && r.n == n) {
            assert_eq!(row.t, grid.time(row.k));
            assert_eq!(row.x, solved.trajectory.at(row.k, row.i)[row.axis]);
            assert_eq!(row.r, solved.costate.at(row.k, row.i)[row.axis]);
            let u = (row.k < grid.steps()).then(|| solved.controls.at(row.k, row.i)[row.axis]);
            assert_eq!(row.u, u);
            checked += 1;
        }
    }
    assert_eq!(checked, (4 + 8) * 11);
    assert_eq!(rows.len(), 2 * checked);

    let sweeps: Vec<IterationRow> = read_rows(&summary.output_dir.join("sweep.csv")).unwrap();
    assert!(sweeps.iter().any(|r| r.solver == "direct" && r.residual.is_none()));
    assert!(sweeps.iter().filter(|r| r.solver == "sweep").all(|r| r.residual.is_some()));
}

#[test]
fn solver_failure_keeps_flagged_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
schema_version = 1
seed = 0
[problem]
id = "alignment"
params = { confinement = -1e200, dim = 1 }
[particles]
n = [2, 4]
steps = 4
"#;
    let config = write_config(tmp.path(), "overflow.toml", text);
    let dir = tmp.path().join("out");
    let out = run_config(&config, &dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
    let m = manifest(&dir);
    assert_eq!(m["status"], "failed");
    assert!(m["failure"].as_str().unwrap().contains("N = 2"));
    assert!(dir.join("trajectories.csv").exists());
    assert!(!dir.join("report.csv").exists());
}

#[test]
fn replicator_run_writes_simplex_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_config(&shipped("replicator_markov.toml"), tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<LabelRow> = read_rows(&tmp.path().join("labels.csv")).unwrap();
    assert_eq!(rows.len(), 16 * 51 * 3);
    for chunk in rows.chunks_exact(3) {
        assert!(chunk.iter().all(|r| r.k == chunk[0].k && r.i == chunk[0].i));
        let mass: f64 = chunk.iter().map(|r| r.value).sum();
        assert!((mass - 1.0).abs() < 1e-10, "{mass}");
    }
    assert!(!tmp.path().join("report.csv").exists());
}

#[test]
fn list_problems_is_stable_and_documented() {
    let first = bin().arg("list-problems").output().unwrap();
    let second = bin().arg("list-problems").output().unwrap();
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.lines().any(|l| l == "model_case"));
    let entries: Vec<&str> = text.split("\n\n").filter(|e| !e.trim().is_empty()).collect();
    assert_eq!(entries.len(), mfpmp::catalog().len());
    for entry in entries {
        assert!(entry.contains("\n  setting: "), "{entry}");
        assert!(entry.contains("parameters:"), "{entry}");
    }
}

#[test]
fn every_shipped_config_parses() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            mfpmp_cli::config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
