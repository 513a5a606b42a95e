use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use density_filter::config::{RunConfig, RunMode};
use density_filter::output::{read_metrics_csv, read_snapshot_csv, METRICS_HEADER};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_density-filter"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = RunConfig::spinning_pair();
    cfg.central_grid = [10, 10];
    cfg.distributed_grid = [8, 8];
    cfg.agents = 20;
    cfg.tracked = 2;
    cfg.report_agents = 2;
    cfg.steps = 12;
    cfg.snapshot_every = 5;
    cfg.out_dir = dir.join("out");
    let path = dir.join("small.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn missing_config_names_the_path() {
    let out = bin(&["run", "/nonexistent/cfg.json"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("/nonexistent/cfg.json"), "{}", stderr(&out));
}

#[test]
fn shipped_configs_validate() {
    for name in ["spinning_pair.json", "coupled.json"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
        let out = bin(&["validate", path.to_str().unwrap()]);
        assert!(out.status.success(), "{name}: {}", stderr(&out));
    }
    let shipped = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/spinning_pair.json")).unwrap();
    let mut expected = RunConfig::spinning_pair();
    expected.out_dir = shipped.out_dir.clone();
    assert_eq!(shipped, expected);
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut value = serde_json::to_value(RunConfig::spinning_pair()).unwrap();
    value["bandwidth"] = serde_json::json!(-0.1);
    std::fs::write(&path, value.to_string()).unwrap();
    let out = bin(&["validate", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bandwidth"), "{}", stderr(&out));

    value["bandwidth"] = serde_json::json!(0.08);
    value["bandwith"] = serde_json::json!(0.08);
    std::fs::write(&path, value.to_string()).unwrap();
    let out = bin(&["validate", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bandwith"), "{}", stderr(&out));
}

#[test]
fn zero_steps_emit_only_the_initial_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("zero");
    let out = bin(&["run", cfg.to_str().unwrap(), "--steps", "0", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    assert_eq!(
        files(&out_dir.join("centralized")),
        ["filter_t0.csv", "kde_t0.csv", "metrics.csv", "reference_t0.csv"]
    );
    let dist = files(&out_dir.join("distributed"));
    assert_eq!(dist.len(), 5);
    assert!(dist.iter().all(|f| f == "metrics.csv" || f.ends_with("_t0.csv")));

    let records = read_metrics_csv(&out_dir.join("centralized/metrics.csv")).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.t == 0.0));
    let snap = read_snapshot_csv(&out_dir.join("centralized/reference_t0.csv")).unwrap();
    assert_eq!((snap.len(), snap[0].len()), (10, 10));
    assert!(snap.iter().flatten().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn full_run_writes_metrics_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = bin(&["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let central = dir.path().join("out/centralized");
    for step in [0, 5, 10, 12] {
        assert!(central.join(format!("filter_t{step}.csv")).exists());
    }
    let text = std::fs::read_to_string(central.join("metrics.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(METRICS_HEADER));
    assert_eq!(text.lines().count(), 1 + 2 * 13);

    let dist = read_metrics_csv(&dir.path().join("out/distributed/metrics.csv")).unwrap();
    let locals: Vec<_> = dist.iter().filter(|r| r.estimator.starts_with("local_")).collect();
    assert_eq!(locals.len(), 2 * 13);
    assert!(locals.iter().all(|r| r.consensus_track_err.is_some() && r.connected.is_some()));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = bin(&["run", cfg.to_str().unwrap(), "--seed", "4", "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for sub in ["centralized", "distributed"] {
        let names = files(&a.join(sub));
        assert_eq!(names, files(&b.join(sub)));
        for name in names {
            let left = std::fs::read(a.join(sub).join(&name)).unwrap();
            let right = std::fs::read(b.join(sub).join(&name)).unwrap();
            assert!(left == right, "{sub}/{name} differs");
        }
    }
}

#[test]
fn sweep_writes_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = bin(&["sweep", cfg.to_str().unwrap(), "--from", "3", "--to", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "seed,filter_l2,kde_l2,filter_grad,kde_grad,filter_wins");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("3,"));
}

#[test]
fn centralized_mode_skips_the_distributed_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&small_config(dir.path())).unwrap();
    cfg.mode = RunMode::Centralized;
    let path = dir.path().join("central.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    let out = bin(&["run", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("out/centralized/metrics.csv").exists());
    assert!(!dir.path().join("out/distributed").exists());
}
