//! Parameter sweeps: independent `simulate` runs gathered into one table.

use lohe_core::correlation::fmt_f64;
use lohe_core::diagnostics::SyncClass;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{csv_table, manifest, Artifacts};
use crate::commands::{run_simulation, CommandOutput};
use crate::config::ConfigError;
use crate::error::Result;
use crate::scenario::{FrequencySpec, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub coupling: f64,
    pub omega: f64,
    pub n: usize,
    pub seed: u64,
}

impl SweepPoint {
    fn sort_key(&self, other: &Self) -> std::cmp::Ordering {
        self.coupling
            .total_cmp(&other.coupling)
            .then(self.omega.total_cmp(&other.omega))
            .then(self.n.cmp(&other.n))
            .then(self.seed.cmp(&other.seed))
    }
}

/// Frequencies evenly spread over `[−Ω, Ω]`.
pub fn spread_frequencies(omega: f64, n: usize) -> FrequencySpec {
    if omega == 0.0 {
        FrequencySpec::Identical
    } else if n == 2 {
        FrequencySpec::Omega(omega)
    } else {
        let last = (n - 1) as f64;
        FrequencySpec::List((0..n).map(|j| omega * (2.0 * j as f64 / last - 1.0)).collect())
    }
}

/// The single-run scenario for one grid point.
pub fn point_scenario(base: &Scenario, p: SweepPoint) -> Scenario {
    let mut s = base.clone();
    s.sweep = None;
    s.seed = p.seed;
    s.model.n = p.n;
    s.model.coupling = p.coupling;
    s.model.frequencies = spread_frequencies(p.omega, p.n);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: SweepPointRecord,
    pub lambda: Option<f64>,
    /// `ok`, `diverged`, or `error: …`.
    pub status: String,
    pub class: Option<String>,
    pub basis: Option<&'static str>,
    /// Slowest `1 − rⱼₖ` rate for phase sync, `|z − e^{iφ}|` rate for a
    /// frequency-synchronized pair.
    pub rate: Option<f64>,
    pub distance_limit: Option<f64>,
    pub max_pair_distance: Option<f64>,
    pub zeta_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPointRecord {
    pub coupling: f64,
    pub omega: f64,
    pub n: usize,
    pub seed: u64,
}

pub fn run_point(base: &Scenario, p: SweepPoint) -> SweepRow {
    let point = SweepPointRecord { coupling: p.coupling, omega: p.omega, n: p.n, seed: p.seed };
    let mut row = SweepRow {
        point,
        lambda: None,
        status: String::new(),
        class: None,
        basis: None,
        rate: None,
        distance_limit: None,
        max_pair_distance: None,
        zeta_norm: None,
    };
    let scenario = point_scenario(base, p);
    let run = match run_simulation(&scenario) {
        Ok(run) => run,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    let s = &run.summary;
    row.lambda = s.two_oscillator.as_ref().map(|r| r.lambda);
    row.distance_limit = s.two_oscillator.as_ref().and_then(|r| r.distance_limit);
    row.zeta_norm = Some(s.final_zeta_norm);
    row.max_pair_distance = Some(s.final_pair_distance.iter().copied().fold(0.0, f64::max));
    if let Some(d) = s.divergence {
        row.status = format!("diverged at step {}", d.step);
        return row;
    }
    row.status = "ok".into();
    if let Some(sync) = &s.sync {
        row.class = Some(sync.class.clone());
        row.basis = Some(sync.basis);
        let rates = s.rates.as_ref();
        row.rate = if sync.class == SyncClass::PhaseSync.name() {
            rates.and_then(|r| r.min_one_minus_r)
        } else if sync.class == SyncClass::FrequencySync.name() {
            rates.and_then(|r| r.z_gap)
        } else {
            None
        };
    }
    row
}

pub fn sweep_points(base: &Scenario) -> Result<Vec<SweepPoint>> {
    let spec = base
        .sweep
        .as_ref()
        .ok_or_else(|| ConfigError::new("sweep needs a [sweep] section").field("sweep"))?;
    let mut points = Vec::new();
    for &coupling in &spec.coupling {
        for &omega in &spec.omega {
            for &n in &spec.n {
                for &seed in &spec.seeds {
                    points.push(SweepPoint { coupling, omega, n, seed });
                }
            }
        }
    }
    points.sort_by(SweepPoint::sort_key);
    points.dedup();
    Ok(points)
}

/// Rows in parameter order, whatever order the runs finish in.
pub fn run_sweep(base: &Scenario) -> Result<Vec<SweepRow>> {
    let points = sweep_points(base)?;
    log::info!("sweep {}: {} runs", base.name, points.len());
    Ok(points.par_iter().map(|p| run_point(base, *p)).collect())
}

pub fn rows_csv(rows: &[SweepRow]) -> Vec<u8> {
    let header = [
        "coupling",
        "omega",
        "n",
        "seed",
        "lambda",
        "status",
        "class",
        "basis",
        "rate",
        "distance_limit",
        "max_pair_distance",
        "zeta_norm",
    ]
    .map(String::from);
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let body = rows.iter().map(|r| {
        vec![
            fmt_f64(r.point.coupling),
            fmt_f64(r.point.omega),
            r.point.n.to_string(),
            r.point.seed.to_string(),
            opt(r.lambda),
            r.status.clone(),
            r.class.clone().unwrap_or_default(),
            r.basis.unwrap_or_default().to_string(),
            opt(r.rate),
            opt(r.distance_limit),
            opt(r.max_pair_distance),
            opt(r.zeta_norm),
        ]
    });
    csv_table(&header, body)
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    name: &'a str,
    command: &'static str,
    runs: usize,
    ok: usize,
    failed: usize,
}

pub fn sweep(base: &Scenario) -> Result<CommandOutput> {
    let rows = run_sweep(base)?;
    let ok = rows.iter().filter(|r| r.status == "ok").count();
    let mut artifacts = Artifacts::default();
    artifacts.insert("manifest.cfg", manifest(base, "sweep"));
    artifacts.insert("sweep.csv", rows_csv(&rows));
    artifacts.insert_json(
        "summary.json",
        &SweepSummary { name: &base.name, command: "sweep", runs: rows.len(), ok, failed: rows.len() - ok },
    );
    Ok(CommandOutput { artifacts, failure: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_is_symmetric() {
        assert_eq!(spread_frequencies(0.0, 4), FrequencySpec::Identical);
        assert_eq!(spread_frequencies(0.3, 2), FrequencySpec::Omega(0.3));
        let FrequencySpec::List(l) = spread_frequencies(1.0, 3) else { panic!() };
        assert_eq!(l, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn points_are_sorted_and_unique() {
        let s: Scenario = "name = s\n[model]\nn = 2\ncoupling = 1\n[sweep]\nomega = 0.2, 0.1, 0.1\nseeds = 2, 1\n"
            .parse()
            .unwrap();
        let pts = sweep_points(&s).unwrap();
        let key: Vec<(f64, u64)> = pts.iter().map(|p| (p.omega, p.seed)).collect();
        assert_eq!(key, vec![(0.1, 1), (0.1, 2), (0.2, 1), (0.2, 2)]);
    }

    #[test]
    fn failed_points_become_rows() {
        // gaussian_pair cannot build three oscillators
        let s: Scenario = "name = s\n[model]\nn = 2\ncoupling = 1\n[grid]\npoints = 32\n[solver]\ndt = 0.1\nt_end = 0.2\n[sweep]\nn = 2, 3\n"
            .parse()
            .unwrap();
        let rows = run_sweep(&s).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].status, "ok");
        assert!(rows[1].status.starts_with("error:"), "{}", rows[1].status);
    }
}
