//! Strang-split pseudospectral time stepping.
//!
//! `strang_rk4` composes an exact kinetic half-step in Fourier space, one RK4
//! step of the potential + frequency + coupling sub-flow, and a second kinetic
//! half-step. Inner products are recomputed from the stage fields at every RK4
//! stage. `full_rk4` applies RK4 to the complete right-hand side and serves as
//! a reference.

use num_complex::Complex64;

use crate::diagnostics::{compute_record_with, DiagnosticsRecord};
use crate::error::{LoheError, Result};
use crate::grid::{GridSpec, SpectralGrid, WaveField};
use crate::model::{local_rhs, EnsembleState, ModelConfig};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    StrangRk4,
    FullRk4,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::StrangRk4 => "strang_rk4",
            Scheme::FullRk4 => "full_rk4",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = LoheError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strang_rk4" => Ok(Scheme::StrangRk4),
            "full_rk4" => Ok(Scheme::FullRk4),
            other => Err(LoheError::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub renormalize_each_step: bool,
    pub snapshot_stride: usize,
    /// Attach a [`DiagnosticsRecord`] to every snapshot.
    pub record_diagnostics: bool,
}

impl SolverParams {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            scheme: Scheme::StrangRk4,
            renormalize_each_step: false,
            snapshot_stride: 1,
            record_diagnostics: false,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_diagnostics(mut self, on: bool) -> Self {
        self.record_diagnostics = on;
        self
    }

    /// Number of steps covering `[0, t_end]`.
    pub fn step_count(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(LoheError::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(LoheError::Config(format!("t_end = {} must be >= 0", self.t_end)));
        }
        if self.snapshot_stride == 0 {
            return Err(LoheError::Config("snapshot_stride must be >= 1".into()));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(LoheError::Config(format!(
                "t_end = {} is not an integer multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }
}

/// Snapshots of an evolution, with per-sample mass drift and optional
/// diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<EnsembleState>,
    pub mass_drift: Vec<Vec<f64>>,
    pub diagnostics: Vec<DiagnosticsRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&EnsembleState> {
        self.states.last()
    }

    /// Largest `|‖ψⱼ(t)‖ − 1|` over all samples.
    pub fn max_mass_drift(&self) -> f64 {
        self.mass_drift.iter().flatten().fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// An evolution that stopped early, with everything computed before the
/// failure.
#[derive(Debug, Clone)]
pub struct EvolveFailure {
    pub error: LoheError,
    pub partial: Trajectory,
}

impl std::fmt::Display for EvolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} snapshots", self.error, self.partial.len())
    }
}

impl std::error::Error for EvolveFailure {}

/// Reusable stepping context: FFT plans and the kinetic half-step factor.
#[derive(Debug, Clone)]
pub struct Stepper {
    spectral: SpectralGrid,
    config: ModelConfig,
    params: SolverParams,
    half_kinetic: Vec<Complex64>,
}

impl Stepper {
    pub fn new(config: &ModelConfig, params: &SolverParams) -> Result<Self> {
        params.step_count()?;
        let spectral = SpectralGrid::new(*config.grid());
        let half_kinetic = spectral.free_propagator(0.5 * params.dt);
        Ok(Self { spectral, config: config.clone(), params: params.clone(), half_kinetic })
    }

    pub fn spectral(&self) -> &SpectralGrid {
        &self.spectral
    }

    /// Advance `state` by one `dt`; `index` labels the step in errors.
    pub fn step(&self, state: &EnsembleState, index: usize) -> Result<EnsembleState> {
        state.check_against(&self.config)?;
        let grid = *state.grid();
        let mut fields: Vec<Vec<Complex64>> =
            state.fields().iter().map(|f| f.values().to_vec()).collect();
        self.advance(&mut fields);
        let time = state.time + self.params.dt;
        if fields.iter().flatten().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(LoheError::Divergence { step: index, time });
        }
        let mut out: Vec<WaveField> = fields
            .into_iter()
            .map(|v| WaveField::new(grid, v).expect("step preserves the grid"))
            .collect();
        if self.params.renormalize_each_step {
            out = out.into_iter().map(WaveField::normalized).collect::<Result<_>>()?;
        }
        EnsembleState::new(time, out)
    }

    fn advance(&self, fields: &mut [Vec<Complex64>]) {
        match self.params.scheme {
            Scheme::StrangRk4 => {
                for f in fields.iter_mut() {
                    self.spectral.apply_fourier_multiplier(f, &self.half_kinetic);
                }
                self.rk4(fields, false);
                for f in fields.iter_mut() {
                    self.spectral.apply_fourier_multiplier(f, &self.half_kinetic);
                }
            }
            Scheme::FullRk4 => self.rk4(fields, true),
        }
    }

    fn rhs(&self, fields: &[Vec<Complex64>], with_kinetic: bool, out: &mut [Vec<Complex64>]) {
        let dv = self.config.grid().cell_volume();
        local_rhs(fields, self.config.params(), self.config.potential(), dv, out);
        if with_kinetic {
            for (psi, o) in fields.iter().zip(out.iter_mut()) {
                let lap = self.spectral.laplacian(psi);
                o.iter_mut().zip(&lap).for_each(|(o, l)| *o += 0.5 * I * l);
            }
        }
    }

    fn rk4(&self, y: &mut [Vec<Complex64>], with_kinetic: bool) {
        let dt = self.params.dt;
        let zero = vec![vec![Complex64::new(0.0, 0.0); y[0].len()]; y.len()];
        let mut k = [zero.clone(), zero.clone(), zero.clone(), zero.clone()];
        let mut stage = zero;
        let offsets = [0.5 * dt, 0.5 * dt, dt];
        self.rhs(y, with_kinetic, &mut k[0]);
        for s in 0..3 {
            for ((st, yv), kv) in stage.iter_mut().zip(y.iter()).zip(&k[s]) {
                for ((a, b), c) in st.iter_mut().zip(yv).zip(kv) {
                    *a = b + offsets[s] * c;
                }
            }
            let (_, rest) = k.split_at_mut(s + 1);
            self.rhs(&stage, with_kinetic, &mut rest[0]);
        }
        let w = dt / 6.0;
        for (j, yv) in y.iter_mut().enumerate() {
            for (i, v) in yv.iter_mut().enumerate() {
                *v += w * (k[0][j][i] + 2.0 * k[1][j][i] + 2.0 * k[2][j][i] + k[3][j][i]);
            }
        }
    }
}

/// One step with a freshly built [`Stepper`].
pub fn step(state: &EnsembleState, config: &ModelConfig, params: &SolverParams) -> Result<EnsembleState> {
    Stepper::new(config, params)?.step(state, 0)
}

/// Advance from `initial` to `t_end`, sampling every `snapshot_stride` steps
/// and at the final step.
pub fn evolve(
    initial: &EnsembleState,
    config: &ModelConfig,
    params: &SolverParams,
) -> std::result::Result<Trajectory, EvolveFailure> {
    let mut traj = Trajectory::default();
    let fail = |error, partial| EvolveFailure { error, partial };
    let steps = match params.step_count() {
        Ok(s) => s,
        Err(e) => return Err(fail(e, traj)),
    };
    if let Err(e) = initial.check_against(config) {
        return Err(fail(e, traj));
    }
    let stepper = match Stepper::new(config, params) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, traj)),
    };
    let t0 = initial.time;
    let record = |traj: &mut Trajectory, state: EnsembleState| {
        traj.times.push(state.time);
        traj.mass_drift.push(state.mass_drift());
        if params.record_diagnostics {
            traj.diagnostics.push(compute_record_with(stepper.spectral(), &state, config));
        }
        traj.states.push(state);
    };
    record(&mut traj, initial.clone());
    let mut current = initial.clone();
    for n in 1..=steps {
        match stepper.step(&current, n) {
            Ok(mut next) => {
                // times from the step counter, not by accumulation
                next.time = t0 + n as f64 * params.dt;
                current = next;
            }
            Err(e) => return Err(fail(e, traj)),
        }
        if n % params.snapshot_stride == 0 || n == steps {
            record(&mut traj, current.clone());
        }
    }
    Ok(traj)
}

/// Advisory step-size bounds for a grid and model.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// `0.1 / (max|V| + max|Ω| + K)`: the bound for the RK4 sub-flow.
    pub recommended_dt: f64,
    /// Kinetic phase `k²dt/4 ≤ π` per half step; only binding for `full_rk4`
    /// since the split kinetic step is exact.
    pub kinetic_dt: f64,
    pub max_wavenumber: f64,
}

pub fn stability_report(grid: &GridSpec, config: &ModelConfig) -> StabilityReport {
    let scale = config.max_abs_potential() + config.params().max_abs_frequency() + config.coupling();
    let recommended_dt = if scale > 0.0 { 0.1 / scale } else { f64::INFINITY };
    let max_wavenumber = grid.max_wavenumber() * (grid.dim() as f64).sqrt();
    let kinetic_dt = 4.0 * std::f64::consts::PI / (max_wavenumber * max_wavenumber);
    StabilityReport { recommended_dt, kinetic_dt, max_wavenumber }
}
