mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::scenario_path;

fn lohe_sync(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lohe-sync"));
    cmd.args(args).env_remove("LOHE_SYNC_OUT");
    if let Some(dir) = out_env {
        cmd.env("LOHE_SYNC_OUT", dir);
    }
    cmd.output().unwrap()
}

fn only_run_dir(root: &Path) -> std::path::PathBuf {
    let entries: Vec<_> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1, "{entries:?}");
    entries.into_iter().next().unwrap()
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let path = dir.join("s.cfg");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

const SMALL: &str = "name = tiny\n[model]\ncoupling = 1\nlambda = 0.5\n[grid]\npoints = 32\nlength = 20\n[solver]\ndt = 0.01\nt_end = 0.5\nstride = 10\n";

#[test]
fn simulate_writes_a_named_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let root = tmp.path().join("runs");
    let out = lohe_sync(&["simulate", "--scenario", &cfg, "--out", root.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = only_run_dir(&root);
    let name = dir.file_name().unwrap().to_str().unwrap();
    let (prefix, secs) = name.rsplit_once('-').unwrap();
    assert_eq!(prefix, "tiny");
    assert!(secs.parse::<u64>().is_ok(), "{name}");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), dir.display().to_string());
    for file in ["manifest.cfg", "diagnostics.ndjson", "final.slw1", "summary.json"] {
        assert!(dir.join(file).is_file(), "{file}");
    }
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let root = tmp.path().join("env-root");
    let out = lohe_sync(&["ode", "--scenario", &cfg, "--format", "csv"], Some(&root));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(only_run_dir(&root).join("ode.csv").is_file());
}

#[test]
fn failed_checks_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenario_path("two_osc_lambda075.cfg");
    let out = lohe_sync(
        &["verify", "--scenario", cfg.to_str().unwrap(), "--dt", "0.25", "--t-end", "4", "--out", tmp.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(only_run_dir(tmp.path()).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn config_errors_exit_2_with_a_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "name = bad\n[model]\ncoupling = x\n");
    let out = lohe_sync(&["simulate", "--scenario", &cfg, "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("model.coupling"), "{err}");

    let missing = lohe_sync(&["simulate", "--scenario", "/nonexistent.cfg"], None);
    assert_eq!(missing.status.code(), Some(2));
    let usage = lohe_sync(&["frobnicate"], None);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn divergence_exits_3_and_keeps_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "name = blowup\n[model]\ncoupling = 50\nlambda = 0.5\n[grid]\npoints = 32\nlength = 10\n[solver]\ndt = 0.5\nt_end = 20\nstride = 1\nscheme = full_rk4\n",
    );
    let root = tmp.path().join("runs");
    let out = lohe_sync(&["simulate", "--scenario", &cfg, "--out", root.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(only_run_dir(&root).join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "diverged");
}
