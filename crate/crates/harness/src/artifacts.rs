use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use lohe_core::correlation::fmt_f64;
use lohe_core::diagnostics::DiagnosticsRecord;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::scenario::{Format, Scenario};

pub const OUT_ENV: &str = "LOHE_SYNC_OUT";
pub const DEFAULT_OUT: &str = "runs";

/// In-memory output files keyed by relative path. Commands build these and
/// a single owner writes them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Artifacts {
    pub files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn insert(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), bytes.into());
    }

    pub fn insert_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("summaries serialize");
        text.push('\n');
        self.insert(name, text);
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(|b| std::str::from_utf8(b).ok())
    }

    /// Write every file under `dir`, creating parents as needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        }
        Ok(())
    }
}

/// `--out`, then `$LOHE_SYNC_OUT`, then `./runs`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    }
}

/// Fresh `<root>/<name>-<unix secs>`, suffixed `-2`, `-3`, … on collision.
pub fn create_run_dir(root: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let base = format!("{name}-{secs}");
    for attempt in 1u32.. {
        let dir = if attempt == 1 { root.join(&base) } else { root.join(format!("{base}-{attempt}")) };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(HarnessError::io(&dir, e)),
        }
    }
    unreachable!("u32 attempts exhausted")
}

/// Resolved scenario, headed by the command that produced the run.
pub fn manifest(scenario: &Scenario, command: &str) -> String {
    format!("# lohe-sync {command}\n{}", scenario.to_config())
}

pub fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| ((j + 1)..n).map(move |k| (j, k))).collect()
}

/// Buffer a table through the `csv` writer with shortest round-trip floats.
pub fn csv_table(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> Vec<u8> {
    let n = records.first().map_or(0, |r| r.n());
    let pairs = upper_pairs(n);
    let mut header: Vec<String> = vec!["t".into(), "zeta_norm".into()];
    for prefix in ["d", "h1", "r", "s", "rho_l1", "current_l1"] {
        header.extend(pairs.iter().map(|(j, k)| format!("{prefix}_{j}_{k}")));
    }
    header.extend(["energy_total", "energy_relative", "energy_zeta", "max_mass_drift"].map(String::from));
    let rows = records.iter().map(|rec| {
        let at = |v: &[f64], j: usize, k: usize| fmt_f64(v[j * n + k]);
        let mut row = vec![fmt_f64(rec.time), fmt_f64(rec.zeta_norm)];
        row.extend(pairs.iter().map(|&(j, k)| at(&rec.pair_l2, j, k)));
        row.extend(pairs.iter().map(|&(j, k)| at(&rec.pair_h1, j, k)));
        row.extend(pairs.iter().map(|&(j, k)| fmt_f64(rec.correlations.r(j, k))));
        row.extend(pairs.iter().map(|&(j, k)| fmt_f64(rec.correlations.s(j, k))));
        row.extend(pairs.iter().map(|&(j, k)| at(&rec.rho_l1, j, k)));
        row.extend(pairs.iter().map(|&(j, k)| at(&rec.current_l1, j, k)));
        row.push(fmt_f64(rec.energies.total));
        row.push(fmt_f64(rec.energies.relative));
        row.push(fmt_f64(rec.energies.zeta_energy));
        row.push(fmt_f64(rec.mass_drift.iter().fold(0.0, |m, d| m.max(d.abs()))));
        row
    });
    csv_table(&header, rows)
}

pub fn diagnostics_file(records: &[DiagnosticsRecord], format: Format) -> (String, Vec<u8>) {
    match format {
        Format::Ndjson => ("diagnostics.ndjson".into(), lohe_core::diagnostics::records_ndjson(records).into_bytes()),
        Format::Csv => ("diagnostics.csv".into(), diagnostics_csv(records)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dirs_never_collide() {
        let root = tempfile::tempdir().unwrap();
        let a = create_run_dir(root.path(), "demo").unwrap();
        let b = create_run_dir(root.path(), "demo").unwrap();
        assert_ne!(a, b);
        assert!(a.file_name().unwrap().to_str().unwrap().starts_with("demo-"));
    }

    #[test]
    fn artifacts_write_nested_paths() {
        let root = tempfile::tempdir().unwrap();
        let mut art = Artifacts::default();
        art.insert("a/b.txt", "x");
        art.write_to(root.path()).unwrap();
        assert_eq!(std::fs::read_to_string(root.path().join("a/b.txt")).unwrap(), "x");
    }

    #[test]
    fn csv_quotes_nothing_for_plain_numbers() {
        let bytes = csv_table(&["t".into(), "x".into()], [vec![fmt_f64(0.1), fmt_f64(1e-20)]]);
        assert_eq!(String::from_utf8(bytes).unwrap(), "t,x\n0.1,1e-20\n");
    }
}
