#![allow(dead_code)]

use std::path::PathBuf;

use lohe_harness::Scenario;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn load(name: &str) -> Scenario {
    Scenario::from_file(&scenario_path(name)).unwrap()
}

pub fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

/// A small two-oscillator scenario for plumbing tests.
pub fn small(extra: &str) -> Scenario {
    format!("name = small\n[model]\ncoupling = 1\nlambda = 0.5\n[grid]\npoints = 32\nlength = 20\n[solver]\ndt = 0.01\nt_end = 1\nstride = 10\n{extra}")
        .parse()
        .unwrap()
}
