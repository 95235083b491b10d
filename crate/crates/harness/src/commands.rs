//! `simulate`, `ode` and `oracle`: run, summarize, and return the artifact set.

use lohe_core::correlation::{detect_period, fmt_f64, integrate, CorrelationSeries, IntegrateOptions, OdeSystem};
use lohe_core::diagnostics::{classify_sync, default_window, fit_rate, DiagnosticsRecord, SyncClass, MIN_SYNC_SAMPLES};
use lohe_core::oracles::{classify_two, sync_limits_two, z_exact, TwoOscRegime};
use lohe_core::solver::{evolve, Trajectory};
use lohe_core::{snapshot, LoheError, LoheParams};
use num_complex::Complex64;
use serde::Serialize;

use crate::artifacts::{csv_table, diagnostics_file, manifest, upper_pairs, Artifacts};
use crate::error::{HarnessError, Result};
use crate::scenario::{Format, Scenario, SnapshotPolicy};

/// Artifacts plus the failure, if any, that decides the exit code. Partial
/// results are still written when `failure` is set.
#[derive(Debug)]
pub struct CommandOutput {
    pub artifacts: Artifacts,
    pub failure: Option<HarnessError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceInfo {
    pub step: usize,
    pub time: f64,
}

/// Two-oscillator closed-form facts, when the model has `Ω₁ = −Ω₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeSummary {
    pub lambda: f64,
    pub regime: &'static str,
    pub phase_offset: Option<f64>,
    pub distance_limit: Option<f64>,
    pub expected_rate: Option<f64>,
    pub period: Option<f64>,
}

impl RegimeSummary {
    fn from_regime(r: &TwoOscRegime) -> Self {
        let limits = sync_limits_two(r).ok();
        Self {
            lambda: r.lambda,
            regime: r.regime.name(),
            phase_offset: r.phi,
            distance_limit: limits.map(|l| l.distance_limit),
            expected_rate: r.rate,
            period: r.period,
        }
    }
}

pub fn two_regime(params: &LoheParams) -> Option<TwoOscRegime> {
    params.lambda()?;
    classify_two(params.coupling(), params.frequencies()[0].abs()).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncSummary {
    /// `phase_sync`, `frequency_sync`, `none`, or `undetermined` when an
    /// instantaneous sample cannot tell.
    pub class: String,
    /// `tail` (final-quarter statistics) or `instantaneous` (last sample only).
    pub basis: &'static str,
    pub max_pair_distance: f64,
    pub zeta_norm: f64,
}

/// Fitted exponential rates; `None` where the fit does not apply or fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    /// `|z − e^{iφ}|` for a synchronizing pair.
    pub z_gap: Option<f64>,
    /// `1 − rⱼₖ` per pair `j < k`, in phase-synchronized runs.
    pub one_minus_r: Option<Vec<Option<f64>>>,
    pub min_one_minus_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub name: String,
    pub command: &'static str,
    pub status: &'static str,
    pub divergence: Option<DivergenceInfo>,
    pub n: usize,
    pub coupling: f64,
    pub frequencies: Vec<f64>,
    pub centering_shift: f64,
    pub two_oscillator: Option<RegimeSummary>,
    pub samples: usize,
    pub t_final: f64,
    pub max_mass_drift: f64,
    pub sync: Option<SyncSummary>,
    pub rates: Option<RateSummary>,
    /// `‖ψⱼ − ψₖ‖` at the last sample, `j < k`.
    pub final_pair_distance: Vec<f64>,
    pub final_zeta_norm: f64,
}

pub fn classify_run(records: &[DiagnosticsRecord], tol: f64) -> Option<SyncSummary> {
    let last = records.last()?;
    let n = last.n();
    let zeta_norm = last.zeta_norm;
    if records.len() >= MIN_SYNC_SAMPLES {
        let report = classify_sync(records, tol).ok()?;
        return Some(SyncSummary {
            class: report.class.name().to_string(),
            basis: "tail",
            max_pair_distance: report.evidence.max_pair_distance,
            zeta_norm,
        });
    }
    let max_pair_distance = upper_pairs(n).iter().map(|&(j, k)| last.pair_distance(j, k)).fold(0.0, f64::max);
    let class = if max_pair_distance <= tol && (zeta_norm - 1.0).abs() <= tol {
        SyncClass::PhaseSync.name()
    } else {
        "undetermined"
    };
    Some(SyncSummary { class: class.to_string(), basis: "instantaneous", max_pair_distance, zeta_norm })
}

/// Decay rate over the default window of the samples above `floor`; the
/// series is cut at its first sample below it.
fn fit_above(times: &[f64], ys: &[f64], floor: f64) -> Option<f64> {
    let len = ys.iter().position(|y| !(*y > floor)).unwrap_or(ys.len());
    if len < 3 {
        return None;
    }
    let times = &times[..len];
    fit_rate(times, &ys[..len], default_window(times)).ok().map(|f| f.rate).filter(|r| r.is_finite())
}

/// `|z − e^{iφ}|` below this is rounding noise in `z` itself.
pub const Z_GAP_FLOOR: f64 = 1e-9;

pub fn fit_rates(traj: &Trajectory, sync: Option<&SyncSummary>, regime: Option<&TwoOscRegime>) -> RateSummary {
    let z_gap = regime.filter(|r| r.rate.is_some() && r.phi.is_some()).and_then(|r| {
        let stable = r.stable_point?;
        let gaps: Vec<f64> = traj.diagnostics.iter().map(|d| (d.correlations.z(0, 1) - stable).norm()).collect();
        fit_above(&traj.times, &gaps, Z_GAP_FLOOR)
    });
    let phase = sync.is_some_and(|s| s.class == SyncClass::PhaseSync.name() && s.basis == "tail");
    let (one_minus_r, min_one_minus_r) = if phase {
        let n = traj.diagnostics.first().map_or(0, |d| d.n());
        let per_pair: Vec<Option<f64>> = upper_pairs(n)
            .iter()
            .map(|&(j, k)| {
                // 1 − r = ½‖ψⱼ − ψₖ‖², free of cancellation
                let ys: Vec<f64> = traj.diagnostics.iter().map(|d| 0.5 * d.pair_distance(j, k).powi(2)).collect();
                fit_above(&traj.times, &ys, 0.0)
            })
            .collect();
        let min = per_pair.iter().copied().collect::<Option<Vec<f64>>>().map(|v| v.into_iter().fold(f64::INFINITY, f64::min));
        (Some(per_pair), min)
    } else {
        (None, None)
    };
    RateSummary { z_gap, one_minus_r, min_one_minus_r }
}

/// Everything `simulate` computes, before it is turned into files.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub trajectory: Trajectory,
    pub summary: SimulationSummary,
    pub divergence: Option<LoheError>,
}

pub fn run_simulation(scenario: &Scenario) -> Result<SimulationRun> {
    let config = scenario.model_config()?;
    let initial = scenario.initial_state()?;
    let (trajectory, divergence) = match evolve(&initial, &config, &scenario.solver_params(true)) {
        Ok(t) => (t, None),
        Err(f) => match f.error {
            LoheError::Divergence { .. } => (f.partial, Some(f.error)),
            other => return Err(other.into()),
        },
    };
    let params = config.params();
    let regime = two_regime(params);
    let sync = if divergence.is_none() { classify_run(&trajectory.diagnostics, scenario.verify.sync_tol) } else { None };
    let rates = divergence.is_none().then(|| fit_rates(&trajectory, sync.as_ref(), regime.as_ref()));
    let last = trajectory.diagnostics.last();
    let n = params.n();
    let summary = SimulationSummary {
        name: scenario.name.clone(),
        command: "simulate",
        status: if divergence.is_some() { "diverged" } else { "ok" },
        divergence: match divergence {
            Some(LoheError::Divergence { step, time }) => Some(DivergenceInfo { step, time }),
            _ => None,
        },
        n,
        coupling: params.coupling(),
        frequencies: params.frequencies().to_vec(),
        centering_shift: params.centering_shift(),
        two_oscillator: regime.as_ref().map(RegimeSummary::from_regime),
        samples: trajectory.len(),
        t_final: trajectory.times.last().copied().unwrap_or(0.0),
        max_mass_drift: trajectory.max_mass_drift(),
        sync,
        rates,
        final_pair_distance: last.map_or_else(Vec::new, |d| upper_pairs(n).iter().map(|&(j, k)| d.pair_distance(j, k)).collect()),
        final_zeta_norm: last.map_or(f64::NAN, |d| d.zeta_norm),
    };
    Ok(SimulationRun { trajectory, summary, divergence })
}

pub fn simulate(scenario: &Scenario) -> Result<CommandOutput> {
    let run = run_simulation(scenario)?;
    let mut artifacts = Artifacts::default();
    artifacts.insert("manifest.cfg", manifest(scenario, "simulate"));
    let (name, bytes) = diagnostics_file(&run.trajectory.diagnostics, scenario.output.format);
    artifacts.insert(name, bytes);
    match scenario.output.snapshots {
        SnapshotPolicy::None => {}
        SnapshotPolicy::Final => {
            if let Some(last) = run.trajectory.last() {
                artifacts.insert("final.slw1", snapshot::encode(last));
            }
        }
        SnapshotPolicy::All => {
            for (i, state) in run.trajectory.states.iter().enumerate() {
                artifacts.insert(format!("snapshots/{i:06}.slw1"), snapshot::encode(state));
            }
        }
    }
    artifacts.insert_json("summary.json", &run.summary);
    Ok(CommandOutput { artifacts, failure: run.divergence.map(HarnessError::from) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeSummary {
    pub name: String,
    pub command: &'static str,
    pub status: &'static str,
    pub divergence: Option<DivergenceInfo>,
    pub system: &'static str,
    pub n: usize,
    pub samples: usize,
    pub t_final: f64,
    /// Largest `|zⱼₖ|` seen; the ODE keeps it at most 1.
    pub max_modulus: f64,
    /// Largest `|zⱼₖ(t) − zⱼₖ(0)|` over the series.
    pub max_deviation_from_initial: f64,
    /// `fg` only: whether the Lyapunov column never increases, and its
    /// largest single-sample increase.
    pub lyapunov_nonincreasing: Option<bool>,
    pub lyapunov_max_increase: Option<f64>,
    /// Return period of `z₀₁`, if one was detected.
    pub period: Option<f64>,
    pub two_oscillator: Option<RegimeSummary>,
}

pub fn lyapunov_increase(series: &CorrelationSeries) -> Option<f64> {
    if series.fg.is_empty() {
        return None;
    }
    let values: Vec<f64> = series.fg.iter().map(|(f, g)| lohe_core::correlation::lyapunov(f, g)).collect();
    Some(values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max).max(0.0))
}

pub fn ode(scenario: &Scenario) -> Result<CommandOutput> {
    let params = scenario.params()?;
    let initial = scenario.initial_correlation()?;
    let o = scenario.ode;
    let opts = IntegrateOptions::new(o.dt, o.t_end).with_stride(o.stride);
    let mut artifacts = Artifacts::default();
    artifacts.insert("manifest.cfg", manifest(scenario, "ode"));
    let mut summary = OdeSummary {
        name: scenario.name.clone(),
        command: "ode",
        status: "ok",
        divergence: None,
        system: o.system.name(),
        n: params.n(),
        samples: 0,
        t_final: 0.0,
        max_modulus: initial.max_modulus(),
        max_deviation_from_initial: 0.0,
        lyapunov_nonincreasing: None,
        lyapunov_max_increase: None,
        period: None,
        two_oscillator: two_regime(&params).as_ref().map(RegimeSummary::from_regime),
    };
    let series = match integrate(o.system, &initial, &params, opts) {
        Ok(s) => s,
        Err(LoheError::Divergence { step, time }) => {
            summary.status = "diverged";
            summary.divergence = Some(DivergenceInfo { step, time });
            artifacts.insert_json("summary.json", &summary);
            let failure = HarnessError::from(LoheError::Divergence { step, time });
            return Ok(CommandOutput { artifacts, failure: Some(failure) });
        }
        Err(e) => return Err(e.into()),
    };
    summary.samples = series.len();
    summary.t_final = *series.times.last().expect("series has the initial sample");
    summary.max_modulus = series.states.iter().map(|s| s.max_modulus()).fold(0.0, f64::max);
    summary.max_deviation_from_initial = series.states.iter().map(|s| s.max_difference(&initial)).fold(0.0, f64::max);
    let increase = lyapunov_increase(&series);
    summary.lyapunov_nonincreasing = increase.map(|d| d <= 0.0);
    summary.lyapunov_max_increase = increase;
    summary.period = detect_period(&series, 0, 1);
    match scenario.output.format {
        Format::Ndjson => artifacts.insert("ode.ndjson", series.to_ndjson()),
        Format::Csv => artifacts.insert("ode.csv", series.to_csv()),
    }
    artifacts.insert_json("summary.json", &summary);
    Ok(CommandOutput { artifacts, failure: None })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    pub name: String,
    pub command: &'static str,
    pub k_coupling: f64,
    pub omega: f64,
    pub regime: RegimeSummary,
    pub stable_point: Option<[f64; 2]>,
    pub unstable_point: Option<[f64; 2]>,
    pub z0: [f64; 2],
    /// Whether a closed-form series was written (`Λ ≤ 1` and `z0` not excluded).
    pub series_written: bool,
    pub note: Option<String>,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

/// Closed-form two-oscillator series on the solver's sampling grid.
pub fn oracle(scenario: &Scenario) -> Result<CommandOutput> {
    let params = scenario.params()?;
    let regime = two_regime(&params).ok_or_else(|| {
        HarnessError::from(crate::config::ConfigError::new("oracle needs n = 2 with opposite frequencies and K > 0").field("model"))
    })?;
    let z0 = scenario.initial_correlation()?.z(0, 1);
    let mut artifacts = Artifacts::default();
    artifacts.insert("manifest.cfg", manifest(scenario, "oracle"));
    let s = scenario.solver;
    let steps = (s.t_end / s.dt).round() as usize;
    let mut times: Vec<f64> = (0..=steps).step_by(s.stride).map(|i| i as f64 * s.dt).collect();
    if !steps.is_multiple_of(s.stride) {
        times.push(steps as f64 * s.dt);
    }
    let values: std::result::Result<Vec<Complex64>, LoheError> = times.iter().map(|t| z_exact(z0, *t, &regime)).collect();
    let (series_written, note) = match values {
        Ok(values) => {
            let gap = |z: Complex64| regime.stable_point.map(|p| (z - p).norm());
            let file = match scenario.output.format {
                Format::Ndjson => {
                    let mut out = String::new();
                    for (t, z) in times.iter().zip(&values) {
                        let line = serde_json::json!({ "t": t, "z_re": z.re, "z_im": z.im, "gap": gap(*z) });
                        out.push_str(&line.to_string());
                        out.push('\n');
                    }
                    ("oracle.ndjson", out.into_bytes())
                }
                Format::Csv => {
                    let header = ["t", "z_re", "z_im", "gap"].map(String::from);
                    let rows = times.iter().zip(&values).map(|(t, z)| {
                        vec![fmt_f64(*t), fmt_f64(z.re), fmt_f64(z.im), gap(*z).map(fmt_f64).unwrap_or_default()]
                    });
                    ("oracle.csv", csv_table(&header, rows))
                }
            };
            artifacts.insert(file.0, file.1);
            (true, None)
        }
        Err(e) => (false, Some(e.to_string())),
    };
    let summary = OracleSummary {
        name: scenario.name.clone(),
        command: "oracle",
        k_coupling: regime.k_coupling,
        omega: regime.omega,
        regime: RegimeSummary::from_regime(&regime),
        stable_point: regime.stable_point.map(pair),
        unstable_point: regime.unstable_point.map(pair),
        z0: pair(z0),
        series_written,
        note,
    };
    artifacts.insert_json("summary.json", &summary);
    Ok(CommandOutput { artifacts, failure: None })
}

/// ODE run as a reference for a PDE trajectory: `ode` settings, at least as
/// long as `t_end`.
pub fn reference_series(scenario: &Scenario, system: OdeSystem, t_end: f64) -> Result<CorrelationSeries> {
    let params = scenario.params()?;
    let initial = scenario.initial_correlation()?;
    let dt = scenario.ode.dt;
    let steps = (t_end / dt).ceil();
    let opts = IntegrateOptions::new(dt, steps * dt).with_stride(scenario.ode.stride);
    Ok(integrate(system, &initial, &params, opts)?)
}
