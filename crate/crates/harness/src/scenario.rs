//! Typed scenarios and their canonical text form.
//!
//! [`Scenario::to_config`] writes every resolved field, so parsing a manifest
//! gives back an equal scenario. That equality is what makes re-runs from a
//! manifest byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use lohe_core::correlation::{fmt_f64, CorrelationState, OdeSystem};
use lohe_core::initial::{gaussian, partner_with_overlap, random_ensemble, random_gram, GaussianSpec, RandomEnsembleSpec};
use lohe_core::model::{EnsembleState, LoheParams, ModelConfig, Potential};
use lohe_core::solver::{Scheme, SolverParams};
use lohe_core::{snapshot, GridSpec, LoheError};
use num_complex::Complex64;

use crate::config::{parse_bool, parse_float_axis, parse_int_axis, ConfigError, Document, Section};
use crate::error::{HarnessError, Result};

const SECTIONS: &[&str] = &["model", "grid", "initial", "solver", "ode", "output", "verify", "sweep"];

#[derive(Debug, Clone, PartialEq)]
pub enum FrequencySpec {
    /// All `Ωⱼ = 0`.
    Identical,
    List(Vec<f64>),
    /// Two oscillators at `±Ω`.
    Omega(f64),
    /// Two oscillators at `±ΛK/2`.
    Lambda(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Zero,
    Cosine { amplitude: f64 },
    Barrier { height: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub n: usize,
    pub coupling: f64,
    pub frequencies: FrequencySpec,
    pub potential: PotentialSpec,
    /// Shift to zero mean frequency before running.
    pub center: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSettings {
    pub dim: usize,
    pub points: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// Gaussian at the box centre and a partner with the given overlap (N = 2).
    GaussianPair { overlap: Complex64 },
    /// One centred Gaussian, copied; the last `negated` copies change sign.
    Identical { width: f64, negated: usize },
    /// Seeded random Gaussians.
    Random { positive_overlaps: bool },
    Snapshot { path: String },
    /// Correlation matrix by upper-triangle entries (ODE only).
    Correlation { entries: BTreeMap<(usize, usize), Complex64> },
    /// Gram matrix of seeded random unit vectors in `ℂ^ambient` (ODE only).
    RandomGram { ambient: usize },
}

impl InitialSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            InitialSpec::GaussianPair { .. } => "gaussian_pair",
            InitialSpec::Identical { .. } => "identical",
            InitialSpec::Random { .. } => "random",
            InitialSpec::Snapshot { .. } => "snapshot",
            InitialSpec::Correlation { .. } => "correlation",
            InitialSpec::RandomGram { .. } => "random_gram",
        }
    }

    pub fn has_fields(&self) -> bool {
        !matches!(self, InitialSpec::Correlation { .. } | InitialSpec::RandomGram { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeSettings {
    pub system: OdeSystem,
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Ndjson,
    Csv,
}

impl Format {
    pub fn name(&self) -> &'static str {
        match self {
            Format::Ndjson => "ndjson",
            Format::Csv => "csv",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ndjson" => Ok(Format::Ndjson),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?} (ndjson or csv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotPolicy {
    None,
    Final,
    All,
}

impl SnapshotPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SnapshotPolicy::None => "none",
            SnapshotPolicy::Final => "final",
            SnapshotPolicy::All => "all",
        }
    }
}

impl FromStr for SnapshotPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(SnapshotPolicy::None),
            "final" => Ok(SnapshotPolicy::Final),
            "all" => Ok(SnapshotPolicy::All),
            other => Err(format!("unknown snapshot policy {other:?} (none, final or all)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputSettings {
    pub format: Format,
    pub snapshots: SnapshotPolicy,
}

/// Tolerances for `verify`, and the classification threshold used everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifySettings {
    pub mass_tol: f64,
    pub consistency_tol: f64,
    pub closed_form_tol: f64,
    pub rate_rtol: f64,
    pub limit_tol: f64,
    pub slope_tol: f64,
    pub period_rtol: f64,
    pub return_tol: f64,
    pub momenta_tol: f64,
    /// `‖ζ(t)‖` drift allowed for stationary initial data.
    pub stationary_tol: f64,
    pub sync_tol: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            mass_tol: 1e-9,
            consistency_tol: 1e-6,
            closed_form_tol: 1e-6,
            rate_rtol: 0.03,
            limit_tol: 1e-3,
            slope_tol: 0.05,
            period_rtol: 0.01,
            return_tol: 1e-4,
            momenta_tol: 1e-3,
            stationary_tol: 1e-8,
            sync_tol: 1e-3,
        }
    }
}

/// Parameter grid. `omega` spreads evenly over `[−Ω, Ω]`, which is `±Ω`
/// for two oscillators and all zeros for `Ω = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub coupling: Vec<f64>,
    pub omega: Vec<f64>,
    pub n: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub model: ModelSpec,
    pub grid: GridSettings,
    pub initial: InitialSpec,
    pub solver: SolverSettings,
    pub ode: OdeSettings,
    pub output: OutputSettings,
    pub verify: VerifySettings,
    pub sweep: Option<SweepSpec>,
}

/// Command-line overrides, applied after parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub format: Option<Format>,
}

fn positive(sec: &Section<'_>, key: &str, v: f64) -> std::result::Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(sec.invalid(key, format!("{v} must be finite and > 0")))
    }
}

fn nonnegative(sec: &Section<'_>, key: &str, v: f64) -> std::result::Result<f64, ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(sec.invalid(key, format!("{v} must be finite and >= 0")))
    }
}

fn parse_lib<T: FromStr<Err = LoheError>>(s: &str) -> std::result::Result<T, String> {
    s.parse::<T>().map_err(|e| e.to_string())
}

fn parse_pair_key(key: &str) -> Option<(usize, usize)> {
    let rest = key.strip_prefix("z_")?;
    let (a, b) = rest.split_once('_')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

impl FromStr for Scenario {
    type Err = ConfigError;

    fn from_str(text: &str) -> std::result::Result<Self, ConfigError> {
        let doc: Document = text.parse()?;
        doc.check_sections(SECTIONS)?;

        let top = doc.section("");
        let name: String = top.require("name")?;
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') {
            return Err(top.invalid("name", "name must be non-empty and use only [A-Za-z0-9_.-]"));
        }
        let seed = top.get_or("seed", 0u64)?;
        top.finish()?;

        let sec = doc.section("model");
        let coupling = nonnegative(&sec, "coupling", sec.require("coupling")?)?;
        let given = ["frequencies", "omega", "lambda"].iter().filter(|k| sec.contains(k)).count();
        if given > 1 {
            return Err(ConfigError::new("set at most one of frequencies, omega, lambda").field("model"));
        }
        let frequencies = if let Some(list) = sec.list::<f64>("frequencies")? {
            FrequencySpec::List(list)
        } else if let Some(w) = sec.get::<f64>("omega")? {
            FrequencySpec::Omega(w)
        } else if let Some(l) = sec.get::<f64>("lambda")? {
            FrequencySpec::Lambda(nonnegative(&sec, "lambda", l)?)
        } else {
            FrequencySpec::Identical
        };
        let implied_n = match &frequencies {
            FrequencySpec::List(l) => Some(l.len()),
            FrequencySpec::Omega(_) | FrequencySpec::Lambda(_) => Some(2),
            FrequencySpec::Identical => None,
        };
        let n = match (sec.get::<usize>("n")?, implied_n) {
            (Some(n), Some(m)) if n != m => {
                return Err(sec.invalid("n", format!("n = {n} but the frequencies describe {m} oscillators")))
            }
            (Some(n), _) => n,
            (None, Some(m)) => m,
            (None, None) => return Err(sec.missing("n")),
        };
        if n < 2 {
            return Err(sec.invalid("n", "need at least 2 oscillators"));
        }
        let potential = match sec.get_or("potential", "zero".to_string())?.as_str() {
            "zero" => PotentialSpec::Zero,
            "cosine" => PotentialSpec::Cosine { amplitude: nonnegative(&sec, "amplitude", sec.require("amplitude")?)? },
            "barrier" => PotentialSpec::Barrier {
                height: sec.require("height")?,
                width: positive(&sec, "width", sec.require("width")?)?,
            },
            other => return Err(sec.invalid("potential", format!("unknown potential {other:?} (zero, cosine, barrier)"))),
        };
        let center = sec.get_with("center", parse_bool)?.unwrap_or(true);
        sec.finish()?;
        let model = ModelSpec { n, coupling, frequencies, potential, center };

        let sec = doc.section("grid");
        let grid = GridSettings {
            dim: sec.get_or("dim", 1usize)?,
            points: sec.get_or("points", 256usize)?,
            length: positive(&sec, "length", sec.get_or("length", 40.0)?)?,
        };
        GridSpec::new(grid.dim, grid.points, grid.length)
            .map_err(|e| ConfigError::new(e.to_string()).field("grid"))?;
        sec.finish()?;

        let sec = doc.section("initial");
        let initial = match sec.get_or("kind", "gaussian_pair".to_string())?.as_str() {
            "gaussian_pair" => InitialSpec::GaussianPair { overlap: sec.complex("overlap")?.unwrap_or(Complex64::new(0.5, 0.0)) },
            "identical" => InitialSpec::Identical {
                width: positive(&sec, "width", sec.get_or("width", 1.0)?)?,
                negated: sec.get_or("negated", 0usize)?,
            },
            "random" => InitialSpec::Random {
                positive_overlaps: sec.get_with("positive_overlaps", parse_bool)?.unwrap_or(false),
            },
            "snapshot" => InitialSpec::Snapshot { path: sec.require("path")? },
            "correlation" => {
                let mut entries = BTreeMap::new();
                for key in sec.keys_matching(|k| k.starts_with("z_")) {
                    let (j, k) = parse_pair_key(&key)
                        .filter(|(j, k)| j < k && *k < n)
                        .ok_or_else(|| sec.invalid(&key, format!("expected z_j_k with j < k < {n}")))?;
                    entries.insert((j, k), sec.complex(&key)?.expect("key exists"));
                }
                InitialSpec::Correlation { entries }
            }
            "random_gram" => InitialSpec::RandomGram { ambient: sec.get_or("ambient", n)? },
            other => return Err(sec.invalid("kind", format!("unknown initial kind {other:?}"))),
        };
        if let InitialSpec::Identical { negated, .. } = initial {
            if negated > n {
                return Err(sec.invalid("negated", format!("{negated} exceeds n = {n}")));
            }
        }
        sec.finish()?;

        let sec = doc.section("solver");
        let solver = SolverSettings {
            dt: positive(&sec, "dt", sec.get_or("dt", 1e-3)?)?,
            t_end: nonnegative(&sec, "t_end", sec.get_or("t_end", 10.0)?)?,
            stride: sec.get_or("stride", 100usize)?,
            scheme: sec.get_with("scheme", parse_lib::<Scheme>)?.unwrap_or(Scheme::StrangRk4),
        };
        if solver.stride == 0 {
            return Err(sec.invalid("stride", "stride must be >= 1"));
        }
        sec.finish()?;

        let sec = doc.section("ode");
        let ode = OdeSettings {
            system: sec.get_with("system", parse_lib::<OdeSystem>)?.unwrap_or(OdeSystem::Full),
            dt: positive(&sec, "dt", sec.get_or("dt", solver.dt)?)?,
            t_end: nonnegative(&sec, "t_end", sec.get_or("t_end", solver.t_end)?)?,
            stride: sec.get_or("stride", 10usize)?,
        };
        if ode.stride == 0 {
            return Err(sec.invalid("stride", "stride must be >= 1"));
        }
        sec.finish()?;

        let sec = doc.section("output");
        let output = OutputSettings {
            format: sec.get_or("format", Format::Ndjson)?,
            snapshots: sec.get_or("snapshots", SnapshotPolicy::Final)?,
        };
        sec.finish()?;

        let sec = doc.section("verify");
        let d = VerifySettings::default();
        let tol = |key: &str, default: f64| -> std::result::Result<f64, ConfigError> {
            positive(&sec, key, sec.get_or(key, default)?)
        };
        let verify = VerifySettings {
            mass_tol: tol("mass_tol", d.mass_tol)?,
            consistency_tol: tol("consistency_tol", d.consistency_tol)?,
            closed_form_tol: tol("closed_form_tol", d.closed_form_tol)?,
            rate_rtol: tol("rate_rtol", d.rate_rtol)?,
            limit_tol: tol("limit_tol", d.limit_tol)?,
            slope_tol: tol("slope_tol", d.slope_tol)?,
            period_rtol: tol("period_rtol", d.period_rtol)?,
            return_tol: tol("return_tol", d.return_tol)?,
            momenta_tol: tol("momenta_tol", d.momenta_tol)?,
            stationary_tol: tol("stationary_tol", d.stationary_tol)?,
            sync_tol: tol("sync_tol", d.sync_tol)?,
        };
        sec.finish()?;

        let sweep = if doc.has_section("sweep") {
            let sec = doc.section("sweep");
            let spec = SweepSpec {
                coupling: sec.get_with("coupling", parse_float_axis)?.unwrap_or_else(|| vec![coupling]),
                omega: sec.get_with("omega", parse_float_axis)?.unwrap_or_else(|| vec![0.0]),
                n: sec.get_with("n", parse_int_axis::<usize>)?.unwrap_or_else(|| vec![n]),
                seeds: sec.get_with("seeds", parse_int_axis::<u64>)?.unwrap_or_else(|| vec![seed]),
            };
            if spec.coupling.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
                return Err(sec.invalid("coupling", "couplings must be finite and >= 0"));
            }
            if spec.omega.iter().any(|w| !w.is_finite()) {
                return Err(sec.invalid("omega", "omegas must be finite"));
            }
            if spec.n.iter().any(|n| *n < 2) {
                return Err(sec.invalid("n", "need at least 2 oscillators"));
            }
            sec.finish()?;
            Some(spec)
        } else {
            None
        };

        Ok(Scenario { name, seed, model, grid, initial, solver, ode, output, verify, sweep })
    }
}

fn join(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(", ")
}

fn fmt_complex(z: Complex64) -> String {
    format!("{}, {}", fmt_f64(z.re), fmt_f64(z.im))
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(text.parse()?)
    }

    /// `--dt` and `--t-end` target `[solver]`, or `[ode]` when `ode_run`.
    pub fn apply(&mut self, o: &Overrides, ode_run: bool) -> Result<()> {
        let check = |what: &str, v: f64, strict: bool| {
            if v.is_finite() && (v > 0.0 || (!strict && v == 0.0)) {
                Ok(v)
            } else {
                Err(HarnessError::Usage(format!("{what} = {v} is out of range")))
            }
        };
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(dt) = o.dt {
            let dt = check("--dt", dt, true)?;
            if ode_run {
                self.ode.dt = dt;
            } else {
                self.solver.dt = dt;
            }
        }
        if let Some(t) = o.t_end {
            let t = check("--t-end", t, false)?;
            if ode_run {
                self.ode.t_end = t;
            } else {
                self.solver.t_end = t;
            }
        }
        if let Some(format) = o.format {
            self.output.format = format;
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields `self` again.
    pub fn to_config(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "seed = {}", self.seed);

        let m = &self.model;
        let _ = writeln!(s, "\n[model]\nn = {}\ncoupling = {}", m.n, fmt_f64(m.coupling));
        match &m.frequencies {
            FrequencySpec::Identical => {}
            FrequencySpec::List(l) => {
                let _ = writeln!(s, "frequencies = {}", join(l.iter().map(|w| fmt_f64(*w))));
            }
            FrequencySpec::Omega(w) => {
                let _ = writeln!(s, "omega = {}", fmt_f64(*w));
            }
            FrequencySpec::Lambda(l) => {
                let _ = writeln!(s, "lambda = {}", fmt_f64(*l));
            }
        }
        match m.potential {
            PotentialSpec::Zero => {
                let _ = writeln!(s, "potential = zero");
            }
            PotentialSpec::Cosine { amplitude } => {
                let _ = writeln!(s, "potential = cosine\namplitude = {}", fmt_f64(amplitude));
            }
            PotentialSpec::Barrier { height, width } => {
                let _ = writeln!(s, "potential = barrier\nheight = {}\nwidth = {}", fmt_f64(height), fmt_f64(width));
            }
        }
        let _ = writeln!(s, "center = {}", m.center);

        let g = &self.grid;
        let _ = writeln!(s, "\n[grid]\ndim = {}\npoints = {}\nlength = {}", g.dim, g.points, fmt_f64(g.length));

        let _ = writeln!(s, "\n[initial]\nkind = {}", self.initial.kind());
        match &self.initial {
            InitialSpec::GaussianPair { overlap } => {
                let _ = writeln!(s, "overlap = {}", fmt_complex(*overlap));
            }
            InitialSpec::Identical { width, negated } => {
                let _ = writeln!(s, "width = {}\nnegated = {negated}", fmt_f64(*width));
            }
            InitialSpec::Random { positive_overlaps } => {
                let _ = writeln!(s, "positive_overlaps = {positive_overlaps}");
            }
            InitialSpec::Snapshot { path } => {
                let _ = writeln!(s, "path = {path}");
            }
            InitialSpec::Correlation { entries } => {
                for ((j, k), z) in entries {
                    let _ = writeln!(s, "z_{j}_{k} = {}", fmt_complex(*z));
                }
            }
            InitialSpec::RandomGram { ambient } => {
                let _ = writeln!(s, "ambient = {ambient}");
            }
        }

        let v = &self.solver;
        let _ = writeln!(
            s,
            "\n[solver]\ndt = {}\nt_end = {}\nstride = {}\nscheme = {}",
            fmt_f64(v.dt),
            fmt_f64(v.t_end),
            v.stride,
            v.scheme.name()
        );
        let o = &self.ode;
        let _ = writeln!(
            s,
            "\n[ode]\nsystem = {}\ndt = {}\nt_end = {}\nstride = {}",
            o.system.name(),
            fmt_f64(o.dt),
            fmt_f64(o.t_end),
            o.stride
        );
        let _ = writeln!(
            s,
            "\n[output]\nformat = {}\nsnapshots = {}",
            self.output.format.name(),
            self.output.snapshots.name()
        );
        let t = &self.verify;
        let _ = writeln!(s, "\n[verify]");
        for (key, value) in [
            ("mass_tol", t.mass_tol),
            ("consistency_tol", t.consistency_tol),
            ("closed_form_tol", t.closed_form_tol),
            ("rate_rtol", t.rate_rtol),
            ("limit_tol", t.limit_tol),
            ("slope_tol", t.slope_tol),
            ("period_rtol", t.period_rtol),
            ("return_tol", t.return_tol),
            ("momenta_tol", t.momenta_tol),
            ("stationary_tol", t.stationary_tol),
            ("sync_tol", t.sync_tol),
        ] {
            let _ = writeln!(s, "{key} = {}", fmt_f64(value));
        }
        if let Some(sw) = &self.sweep {
            let _ = writeln!(
                s,
                "\n[sweep]\ncoupling = {}\nomega = {}\nn = {}\nseeds = {}",
                join(sw.coupling.iter().map(|v| fmt_f64(*v))),
                join(sw.omega.iter().map(|v| fmt_f64(*v))),
                join(sw.n.iter().map(|v| v.to_string())),
                join(sw.seeds.iter().map(|v| v.to_string())),
            );
        }
        s
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(self.grid.dim, self.grid.points, self.grid.length)?)
    }

    pub fn frequencies(&self) -> Result<Vec<f64>> {
        let m = &self.model;
        let list = match &m.frequencies {
            FrequencySpec::Identical => vec![0.0; m.n],
            FrequencySpec::List(l) => l.clone(),
            FrequencySpec::Omega(w) => vec![*w, -*w],
            FrequencySpec::Lambda(l) => {
                let w = 0.5 * l * m.coupling;
                vec![w, -w]
            }
        };
        if list.len() != m.n {
            return Err(ConfigError::new(format!("{} frequencies for n = {}", list.len(), m.n)).field("model").into());
        }
        Ok(list)
    }

    pub fn params(&self) -> Result<LoheParams> {
        let p = LoheParams::new(self.model.coupling, self.frequencies()?)?;
        Ok(if self.model.center { p.centered() } else { p })
    }

    pub fn potential(&self) -> Potential {
        match self.model.potential {
            PotentialSpec::Zero => Potential::Zero,
            PotentialSpec::Cosine { amplitude } => Potential::CosineWell { amplitude },
            PotentialSpec::Barrier { height, width } => Potential::Barrier { height, width },
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig::new(self.params()?, self.grid_spec()?, &self.potential())?)
    }

    pub fn solver_params(&self, record_diagnostics: bool) -> SolverParams {
        SolverParams::new(self.solver.dt, self.solver.t_end)
            .with_stride(self.solver.stride)
            .with_scheme(self.solver.scheme)
            .with_diagnostics(record_diagnostics)
    }

    /// Initial wave functions, deterministic in the scenario and seed.
    pub fn initial_state(&self) -> Result<EnsembleState> {
        let grid = self.grid_spec()?;
        let n = self.model.n;
        let mid = vec![0.5 * grid.length(); grid.dim()];
        let state = match &self.initial {
            InitialSpec::GaussianPair { overlap } => {
                if n != 2 {
                    return Err(ConfigError::new(format!("gaussian_pair needs n = 2, got {n}")).field("initial.kind").into());
                }
                let base = gaussian(&grid, &GaussianSpec { center: mid.clone(), width: 1.0, phase: 0.0, momentum: vec![0.0; grid.dim()] })?;
                let mut helper_center = mid;
                helper_center[0] += 1.5;
                let mut momentum = vec![0.0; grid.dim()];
                momentum[0] = 0.8;
                let helper = gaussian(&grid, &GaussianSpec { center: helper_center, width: 1.3, phase: 0.3, momentum })?;
                let partner = partner_with_overlap(&base, &helper, *overlap)?;
                EnsembleState::new(0.0, vec![base, partner])?
            }
            InitialSpec::Identical { width, negated } => {
                let psi = gaussian(&grid, &GaussianSpec { center: mid, width: *width, phase: 0.0, momentum: vec![0.0; grid.dim()] })?;
                let minus = psi.scaled(Complex64::new(-1.0, 0.0));
                let fields = (0..n).map(|j| if j + negated < n { psi.clone() } else { minus.clone() }).collect();
                EnsembleState::new(0.0, fields)?
            }
            InitialSpec::Random { positive_overlaps } => {
                let mut spec = RandomEnsembleSpec::new(n);
                spec.require_positive_overlaps = *positive_overlaps;
                random_ensemble(&grid, &spec, self.seed)?
            }
            InitialSpec::Snapshot { path } => {
                let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
                let state = snapshot::decode(&bytes)?;
                if state.n() != n || *state.grid() != grid {
                    return Err(ConfigError::new(format!("snapshot {path} does not match the model's n and grid"))
                        .field("initial.path")
                        .into());
                }
                state
            }
            InitialSpec::Correlation { .. } | InitialSpec::RandomGram { .. } => {
                return Err(ConfigError::new(format!("initial kind {} has no wave functions", self.initial.kind()))
                    .field("initial.kind")
                    .into())
            }
        };
        Ok(state)
    }

    /// Initial correlation matrix; field-based kinds use their Gram matrix.
    pub fn initial_correlation(&self) -> Result<CorrelationState> {
        let n = self.model.n;
        match &self.initial {
            InitialSpec::Correlation { entries } => {
                let mut z = vec![Complex64::new(0.0, 0.0); n * n];
                for j in 0..n {
                    z[j * n + j] = Complex64::new(1.0, 0.0);
                    for k in (j + 1)..n {
                        let v = *entries.get(&(j, k)).ok_or_else(|| {
                            HarnessError::from(ConfigError::new("missing correlation entry").field(format!("initial.z_{j}_{k}")))
                        })?;
                        z[j * n + k] = v;
                        z[k * n + j] = v.conj();
                    }
                }
                Ok(CorrelationState::new(0.0, n, z)?)
            }
            InitialSpec::RandomGram { ambient } => Ok(random_gram(n, *ambient, self.seed)?),
            _ => Ok(CorrelationState::from_ensemble(&self.initial_state()?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
name = demo
seed = 4
[model]
coupling = 1
lambda = 0.75
[solver]
dt = 0.01
t_end = 1
";

    #[test]
    fn defaults_and_shorthand() {
        let s: Scenario = SAMPLE.parse().unwrap();
        assert_eq!(s.model.n, 2);
        assert_eq!(s.frequencies().unwrap(), vec![0.375, -0.375]);
        assert_eq!(s.ode.dt, 0.01);
        assert_eq!(s.grid.points, 256);
        assert!(matches!(s.initial, InitialSpec::GaussianPair { .. }));
        assert!(s.sweep.is_none());
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut s: Scenario = SAMPLE.parse().unwrap();
        assert_eq!(s.to_config().parse::<Scenario>().unwrap(), s);
        s.initial = InitialSpec::Correlation {
            entries: [((0, 1), Complex64::new(0.1, 0.30000000000000004))].into_iter().collect(),
        };
        s.model.potential = PotentialSpec::Barrier { height: 1.5, width: 2.0 };
        s.sweep = Some(SweepSpec { coupling: vec![1.0], omega: vec![0.0, 0.1], n: vec![2], seeds: vec![1, 2] });
        assert_eq!(s.to_config().parse::<Scenario>().unwrap(), s);
    }

    #[test]
    fn validation_errors_point_at_fields() {
        let e = "name = x\n[model]\nn = 3\nlambda = 0.5\ncoupling = 1\n".parse::<Scenario>().unwrap_err();
        assert_eq!(e.line, Some(3));
        assert_eq!(e.field.as_deref(), Some("model.n"));
        let e = "name = x\n[model]\nn = 2\ncoupling = -1\n".parse::<Scenario>().unwrap_err();
        assert_eq!(e.line, Some(4));
        let e = "name = x\n[model]\nn = 2\ncoupling = 1\n[solver]\ndt = 0\n".parse::<Scenario>().unwrap_err();
        assert_eq!(e.field.as_deref(), Some("solver.dt"));
        let e = "name = x\n[model]\nn = 2\ncoupling = 1\n[ode]\nsystem = nope\n".parse::<Scenario>().unwrap_err();
        assert_eq!(e.line, Some(6));
        let e = "name = x\n[modle]\n".parse::<Scenario>().unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn overrides_target_the_requested_integrator() {
        let mut s: Scenario = SAMPLE.parse().unwrap();
        let o = Overrides { seed: Some(9), dt: Some(0.5), t_end: Some(0.0), format: Some(Format::Csv) };
        s.apply(&o, false).unwrap();
        assert_eq!((s.seed, s.solver.dt, s.solver.t_end, s.ode.dt), (9, 0.5, 0.0, 0.01));
        s.apply(&Overrides { dt: Some(0.2), ..Default::default() }, true).unwrap();
        assert_eq!(s.ode.dt, 0.2);
        assert!(s.apply(&Overrides { dt: Some(-1.0), ..Default::default() }, true).is_err());
    }

    #[test]
    fn identical_fields_with_negated_copies() {
        let s: Scenario = "name = x\n[model]\nn = 3\ncoupling = 1\n[grid]\npoints = 32\n[initial]\nkind = identical\nnegated = 1\n"
            .parse()
            .unwrap();
        let state = s.initial_state().unwrap();
        let c = CorrelationState::from_ensemble(&state);
        assert!((c.z(0, 1) - 1.0).norm() < 1e-12);
        assert!((c.z(0, 2) + 1.0).norm() < 1e-12);
    }
}
