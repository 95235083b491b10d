//! Closed-form references: the two-oscillator regimes and trajectories,
//! stationary ensembles, and scattering profiles.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::diagnostics::{default_window, fit_rate};
use crate::error::{LoheError, Result};
use crate::grid::{dot, norm_sq, SpectralGrid, WaveField};
use crate::model::{order_parameter, EnsembleState, ModelConfig};
use crate::solver::Trajectory;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// `|Λ − 1|` below this counts as critical.
const CRITICAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    UnderdampedSync,
    Critical,
    Periodic,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::UnderdampedSync => "underdamped_sync",
            Regime::Critical => "critical",
            Regime::Periodic => "periodic",
        }
    }
}

/// The two-oscillator problem `Ω₁ = −Ω₂ = Ω` classified by `Λ = 2Ω/K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoOscRegime {
    pub k_coupling: f64,
    pub omega: f64,
    pub lambda: f64,
    /// `arcsin Λ`, for `Λ ≤ 1`.
    pub phi: Option<f64>,
    pub regime: Regime,
    /// `e^{iφ}`, for `Λ ≤ 1`.
    #[serde(skip)]
    pub stable_point: Option<Complex64>,
    /// `−√(1−Λ²) + iΛ`, for `Λ ≤ 1` (equal to `i` at `Λ = 1`).
    #[serde(skip)]
    pub unstable_point: Option<Complex64>,
    /// `√(K² − 4Ω²)`, for `Λ < 1`.
    pub rate: Option<f64>,
    /// `2π/√(4Ω² − K²)`, for `Λ > 1`.
    pub period: Option<f64>,
}

pub fn classify_two(k_coupling: f64, omega: f64) -> Result<TwoOscRegime> {
    if !(k_coupling.is_finite() && k_coupling > 0.0) {
        return Err(LoheError::Config(format!("coupling K = {k_coupling} must be > 0")));
    }
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(LoheError::Config(format!("frequency Ω = {omega} must be >= 0")));
    }
    let lambda = 2.0 * omega / k_coupling;
    let mut out = TwoOscRegime {
        k_coupling,
        omega,
        lambda,
        phi: None,
        regime: Regime::Periodic,
        stable_point: None,
        unstable_point: None,
        rate: None,
        period: None,
    };
    if (lambda - 1.0).abs() <= CRITICAL_TOL {
        out.regime = Regime::Critical;
        out.phi = Some(0.5 * PI);
        out.stable_point = Some(I);
        out.unstable_point = Some(I);
    } else if lambda < 1.0 {
        let c = (1.0 - lambda * lambda).sqrt();
        out.regime = Regime::UnderdampedSync;
        out.phi = Some(lambda.asin());
        out.stable_point = Some(Complex64::new(c, lambda));
        out.unstable_point = Some(Complex64::new(-c, lambda));
        out.rate = Some(k_coupling * c);
    } else {
        out.period = Some(2.0 * PI / (4.0 * omega * omega - k_coupling * k_coupling).sqrt());
    }
    Ok(out)
}

/// Closed-form `z(t)` for `ż = 2iΩz + (K/2)(1 − z²)`.
///
/// For `Λ < 1`, with `a = e^{iφ}`, `b = e^{−iφ}`, `γ = √(K² − 4Ω²)`:
/// `z = (a + b·w)/(1 − w)`, `w = w₀e^{−γt}`, `w₀ = (z₀ − a)/(z₀ + b)`.
/// For `Λ = 1`: `z = i + (Kt/2 + 1/(z₀ − i))⁻¹`.
pub fn z_exact(z0: Complex64, t: f64, regime: &TwoOscRegime) -> Result<Complex64> {
    let k = regime.k_coupling;
    match regime.regime {
        Regime::UnderdampedSync => {
            let a = regime.stable_point.expect("set for Λ < 1");
            let b = a.conj();
            let denom = z0 + b;
            if denom.norm() <= f64::EPSILON {
                return Err(LoheError::ExcludedInitialPoint(format!(
                    "z0 = {z0} is the unstable stationary point"
                )));
            }
            let gamma = regime.rate.expect("set for Λ < 1");
            let w = (z0 - a) / denom * (-gamma * t).exp();
            let pole = ONE - w;
            if pole.norm() <= f64::EPSILON {
                return Err(LoheError::ExcludedInitialPoint(format!("z0 = {z0} reaches a pole at t = {t}")));
            }
            Ok((a + b * w) / pole)
        }
        Regime::Critical => {
            let d = z0 - I;
            if d.norm() <= f64::EPSILON {
                return Err(LoheError::ExcludedInitialPoint("z0 = i is the stationary point".into()));
            }
            let inner = 0.5 * k * t + ONE / d;
            if inner.norm() <= f64::EPSILON {
                return Err(LoheError::ExcludedInitialPoint(format!("z0 = {z0} reaches a pole at t = {t}")));
            }
            Ok(I + ONE / inner)
        }
        Regime::Periodic => Err(LoheError::UnsupportedRegime(format!(
            "Λ = {} > 1 has no closed form; integrate the two-oscillator ODE",
            regime.lambda
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyncLimits {
    pub phase_offset: f64,
    /// `|1 − e^{iφ}| = 2 sin(φ/2)`.
    pub distance_limit: f64,
    /// Exponential rate for `Λ < 1`; zero at `Λ = 1`, where decay is algebraic.
    pub rate: f64,
}

pub fn sync_limits_two(regime: &TwoOscRegime) -> Result<SyncLimits> {
    let Some(phi) = regime.phi else {
        return Err(LoheError::UnsupportedRegime(format!(
            "Λ = {} > 1: the pair does not synchronize",
            regime.lambda
        )));
    };
    Ok(SyncLimits {
        phase_offset: phi,
        distance_limit: 2.0 * (0.5 * phi).sin(),
        rate: regime.rate.unwrap_or(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointKind {
    Incoherent,
    SplitSync,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointClass {
    pub kind: FixedPointKind,
    /// Size of the majority group, `k > N/2` (split case only).
    pub k_positive: Option<usize>,
    /// `‖ζ‖`; `2k/N − 1` in the split case.
    pub zeta_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FixedPointOutcome {
    Stationary(FixedPointClass),
    NotStationary { max_residual: f64 },
}

/// Stationary ensembles are those with `ζ = ⟨ζ, ψⱼ⟩ψⱼ` for every `j`:
/// either `ζ = 0`, or every `ψⱼ = ±ψ` for one profile `ψ`.
pub fn classify_fixed_point(state: &EnsembleState, tol: f64) -> FixedPointOutcome {
    let op = order_parameter(state);
    let dv = state.grid().cell_volume();
    let zeta = op.zeta.values();
    let max_residual = state
        .fields()
        .iter()
        .zip(&op.overlaps)
        .map(|(psi, c)| {
            let r: Vec<Complex64> = zeta.iter().zip(psi.values()).map(|(z, p)| z - c * p).collect();
            norm_sq(&r, dv).sqrt()
        })
        .fold(0.0, f64::max);
    if max_residual > tol {
        return FixedPointOutcome::NotStationary { max_residual };
    }
    if op.norm <= tol {
        return FixedPointOutcome::Stationary(FixedPointClass {
            kind: FixedPointKind::Incoherent,
            k_positive: None,
            zeta_norm: op.norm,
        });
    }
    let k = op.overlaps.iter().filter(|c| c.re > 0.0).count();
    FixedPointOutcome::Stationary(FixedPointClass {
        kind: FixedPointKind::SplitSync,
        k_positive: Some(k),
        zeta_norm: op.norm,
    })
}

/// `e^{iHs}` with `H = −½Δ + V`: an exact Fourier multiplier when `V = 0`,
/// otherwise Strang splitting `e^{iVτ/2}e^{−iτΔ/2}e^{iVτ/2}` with sub-steps
/// of at most `max_substep`. Both are unitary, and the inverse of a time-`s`
/// application is the time-`−s` application.
#[derive(Debug, Clone)]
pub struct LinearPropagator {
    spectral: SpectralGrid,
    potential: Vec<f64>,
    free: bool,
    max_substep: f64,
}

impl LinearPropagator {
    pub fn new(config: &ModelConfig, max_substep: f64) -> Self {
        Self {
            spectral: SpectralGrid::new(*config.grid()),
            potential: config.potential().to_vec(),
            free: config.potential().iter().all(|v| *v == 0.0),
            max_substep,
        }
    }

    pub fn apply(&self, data: &mut [Complex64], s: f64) {
        if s == 0.0 {
            return;
        }
        if self.free {
            // e^{iHs} = e^{+ik²s/2}
            self.spectral.apply_fourier_multiplier(data, &self.spectral.free_propagator(-s));
            return;
        }
        let steps = (s.abs() / self.max_substep).ceil().max(1.0) as usize;
        let tau = s / steps as f64;
        let half_v: Vec<Complex64> = self.potential.iter().map(|v| Complex64::from_polar(1.0, 0.5 * v * tau)).collect();
        let kinetic = self.spectral.free_propagator(-tau);
        for _ in 0..steps {
            data.iter_mut().zip(&half_v).for_each(|(d, f)| *d *= f);
            self.spectral.apply_fourier_multiplier(data, &kinetic);
            data.iter_mut().zip(&half_v).for_each(|(d, f)| *d *= f);
        }
    }
}

/// Result of [`scattering_state`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringState {
    /// `ψ̃ⱼ = ψⱼ(t₀) + ∫ e^{iHs}Nⱼ(s) ds`, propagated back to `t = 0`.
    pub profile: WaveField,
    /// `‖Nⱼ(T)‖/λ`, bounding the neglected `∫_T^∞`.
    pub tail_bound: f64,
    /// Fitted exponential decay rate `λ` of `‖Nⱼ‖`; `None` when `N ≡ 0`.
    pub integrand_rate: Option<f64>,
    /// `‖Nⱼ(tₙ)‖` at every snapshot.
    pub integrand_norms: Vec<f64>,
}

/// Integrand norms at or below this count as an identically vanishing integrand.
const NULL_INTEGRAND: f64 = 1e-14;

/// Approximates the asymptotic free profile of oscillator `j` from a
/// trajectory with uniformly spaced snapshots. `Nⱼ = −iΩⱼψⱼ +
/// (K/2)(ζ − ⟨ζ, ψⱼ⟩ψⱼ)` is the non-linear part of the flow, so
/// `d/dt e^{iHt}ψⱼ = e^{iHt}Nⱼ`. The integral is a composite trapezoid in
/// Horner form, sharing one propagation per snapshot interval.
pub fn scattering_state(
    trajectory: &Trajectory,
    config: &ModelConfig,
    oscillator: usize,
    tail_tol: f64,
) -> Result<ScatteringState> {
    let m = trajectory.states.len();
    if m < 3 {
        return Err(LoheError::SeriesTooShort("scattering needs at least three snapshots".into()));
    }
    if oscillator >= config.n_oscillators() {
        return Err(LoheError::Config(format!("oscillator {oscillator} out of range")));
    }
    let times = &trajectory.times;
    let h = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(LoheError::Contract("scattering needs uniformly spaced snapshots".into()));
    }
    let dv = config.grid().cell_volume();
    let half_k = 0.5 * config.coupling();
    let omega = config.frequencies()[oscillator];
    let integrand = |state: &EnsembleState| -> Vec<Complex64> {
        let op = order_parameter(state);
        let psi = state.fields()[oscillator].values();
        let c = dot(op.zeta.values(), psi, dv);
        psi.iter().zip(op.zeta.values()).map(|(p, z)| -I * omega * p + half_k * (z - c * p)).collect()
    };
    let samples: Vec<Vec<Complex64>> = trajectory.states.iter().map(integrand).collect();
    let integrand_norms: Vec<f64> = samples.iter().map(|s| norm_sq(s, dv).sqrt()).collect();
    let last_norm = *integrand_norms.last().expect("non-empty");
    let (tail_bound, integrand_rate) = if integrand_norms.iter().all(|v| *v <= NULL_INTEGRAND) {
        (0.0, None)
    } else {
        let fit = fit_rate(times, &integrand_norms, default_window(times))?;
        if !(fit.rate > 0.0) {
            return Err(LoheError::SeriesTooShort(format!(
                "integrand is not decaying (fitted rate {})",
                fit.rate
            )));
        }
        (last_norm / fit.rate, Some(fit.rate))
    };
    if tail_bound > tail_tol {
        return Err(LoheError::SeriesTooShort(format!(
            "tail bound {tail_bound:e} exceeds the requested {tail_tol:e}; extend the trajectory"
        )));
    }
    let prop = LinearPropagator::new(config, 1e-3);
    let mut acc: Vec<Complex64> = samples[m - 1].iter().map(|v| 0.5 * h * v).collect();
    for n in (1..m - 1).rev() {
        prop.apply(&mut acc, h);
        acc.iter_mut().zip(&samples[n]).for_each(|(a, s)| *a += h * s);
    }
    prop.apply(&mut acc, h);
    let psi0 = trajectory.states[0].fields()[oscillator].values();
    acc.iter_mut().zip(&samples[0]).zip(psi0).for_each(|((a, s), p)| *a += 0.5 * h * s + p);
    prop.apply(&mut acc, times[0]);
    Ok(ScatteringState {
        profile: WaveField::new(*config.grid(), acc)?,
        tail_bound,
        integrand_rate,
        integrand_norms,
    })
}

/// `‖ψⱼ(tₙ) − e^{−iHtₙ}ψ̃ⱼ‖` at every snapshot, built by repeated
/// backward steps of one snapshot interval.
pub fn scattering_residuals(
    trajectory: &Trajectory,
    config: &ModelConfig,
    oscillator: usize,
    profile: &WaveField,
) -> Result<Vec<f64>> {
    let times = &trajectory.times;
    let Some(&t0) = times.first() else {
        return Ok(Vec::new());
    };
    let prop = LinearPropagator::new(config, 1e-3);
    let dv = config.grid().cell_volume();
    let mut v = profile.values().to_vec();
    prop.apply(&mut v, -t0);
    let mut out = Vec::with_capacity(times.len());
    for (i, state) in trajectory.states.iter().enumerate() {
        if i > 0 {
            prop.apply(&mut v, -(times[i] - times[i - 1]));
        }
        let psi = state.fields()[oscillator].values();
        let d: Vec<Complex64> = psi.iter().zip(&v).map(|(a, b)| a - b).collect();
        out.push(norm_sq(&d, dv).sqrt());
    }
    Ok(out)
}

/// `‖e^{iHt}ψⱼ(t) − ψ̃ⱼ‖` at one snapshot, propagating forward directly.
pub fn scattering_residual_at(
    trajectory: &Trajectory,
    config: &ModelConfig,
    oscillator: usize,
    profile: &WaveField,
    index: usize,
) -> Result<f64> {
    let state = trajectory
        .states
        .get(index)
        .ok_or_else(|| LoheError::Config(format!("snapshot {index} out of range")))?;
    let prop = LinearPropagator::new(config, 1e-3);
    let mut v = state.fields()[oscillator].values().to_vec();
    // match the backward construction step for step
    for i in (0..index).rev() {
        prop.apply(&mut v, trajectory.times[i + 1] - trajectory.times[i]);
    }
    prop.apply(&mut v, trajectory.times[0]);
    let d: Vec<Complex64> = v.iter().zip(profile.values()).map(|(a, b)| a - b).collect();
    Ok(norm_sq(&d, config.grid().cell_volume()).sqrt())
}
