//! Closed finite-dimensional dynamics of the correlations `zⱼₖ = ⟨ψⱼ, ψₖ⟩`.
//!
//! Four reductions live here: the full pairwise system, the two-oscillator
//! scalar equation, the macroscopic correlations `⟨ζ, ψⱼ⟩`, and the
//! identical-oscillator `(f, g)` variables with `1 − ⟨ζ, ψⱼ⟩ = fⱼ + i gⱼ`,
//! together with a fixed-step RK4 driver.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{LoheError, Result};
use crate::model::{EnsembleState, LoheParams};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Hermitian `N × N` correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationState {
    pub time: f64,
    n: usize,
    z: Vec<Complex64>,
}

impl CorrelationState {
    /// Validates shape, Hermitian symmetry and the diagonal (both to 1e-9),
    /// then stores the mirrored upper triangle with an exact unit diagonal.
    pub fn new(time: f64, n: usize, z: Vec<Complex64>) -> Result<Self> {
        if n < 2 || z.len() != n * n {
            return Err(LoheError::Config(format!(
                "correlation matrix needs n >= 2 and n² entries (n = {n}, {} entries)",
                z.len()
            )));
        }
        if z.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(LoheError::Config("non-finite correlation entry".into()));
        }
        for j in 0..n {
            if (z[j * n + j] - ONE).norm() > 1e-9 {
                return Err(LoheError::Config(format!("z[{j}][{j}] = {} is not 1", z[j * n + j])));
            }
            for k in (j + 1)..n {
                if (z[j * n + k] - z[k * n + j].conj()).norm() > 1e-9 {
                    return Err(LoheError::Config(format!("z is not Hermitian at ({j}, {k})")));
                }
            }
        }
        Ok(Self::from_upper(time, n, &z))
    }

    fn from_upper(time: f64, n: usize, z: &[Complex64]) -> Self {
        let mut out = vec![ONE; n * n];
        for j in 0..n {
            for k in (j + 1)..n {
                out[j * n + k] = z[j * n + k];
                out[k * n + j] = z[j * n + k].conj();
            }
        }
        Self { time, n, z: out }
    }

    /// Every pair fully correlated.
    pub fn synchronized(n: usize) -> Self {
        Self { time: 0.0, n, z: vec![ONE; n * n] }
    }

    /// The two-oscillator state with `z₁₂ = z`.
    pub fn pair(time: f64, z: Complex64) -> Self {
        Self { time, n: 2, z: vec![ONE, z, z.conj(), ONE] }
    }

    /// Correlations measured from wavefunctions. The diagonal is set to 1;
    /// norm drift is tracked separately by the solver.
    pub fn from_ensemble(state: &EnsembleState) -> Self {
        let n = state.n();
        Self::from_upper(state.time, n, &state.gram())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn z(&self, j: usize, k: usize) -> Complex64 {
        self.z[j * self.n + k]
    }

    pub fn r(&self, j: usize, k: usize) -> f64 {
        self.z(j, k).re
    }

    pub fn s(&self, j: usize, k: usize) -> f64 {
        self.z(j, k).im
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.z
    }

    /// `‖ζ‖² = (1/N²)Σⱼₖ rⱼₖ`.
    pub fn zeta_norm_sq(&self) -> f64 {
        self.z.iter().map(|c| c.re).sum::<f64>() / (self.n * self.n) as f64
    }

    pub fn max_modulus(&self) -> f64 {
        self.z.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    pub fn macro_correlation(&self) -> MacroCorrelation {
        MacroCorrelation::from_state(self)
    }

    pub fn max_difference(&self, other: &CorrelationState) -> f64 {
        self.z.iter().zip(&other.z).fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// Cholesky test on `z + tol·I`.
    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        let n = self.n;
        let mut l = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut d = self.z(j, j).re + tol;
            for p in 0..j {
                d -= l[j * n + p].norm_sqr();
            }
            if d <= 0.0 {
                return false;
            }
            let d = d.sqrt();
            l[j * n + j] = Complex64::new(d, 0.0);
            for i in (j + 1)..n {
                // row i of L: L[i][j] = (A[i][j] − Σ L[i][p] conj(L[j][p])) / L[j][j]
                let mut v = self.z(i, j);
                for p in 0..j {
                    v -= l[i * n + p] * l[j * n + p].conj();
                }
                l[i * n + j] = v / d;
            }
        }
        true
    }
}

/// Macroscopic correlations `r̃ⱼ + i s̃ⱼ = ⟨ζ, ψⱼ⟩` and the decay variables
/// `fⱼ = 1 − r̃ⱼ`, `gⱼ = −s̃ⱼ`, `fₗⱼ = 1 − rₗⱼ`, `gₗⱼ = −sₗⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroCorrelation {
    pub r_tilde: Vec<f64>,
    pub s_tilde: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// Row-major `N × N`.
    pub f_pair: Vec<f64>,
    pub g_pair: Vec<f64>,
}

impl MacroCorrelation {
    pub fn from_state(state: &CorrelationState) -> Self {
        let n = state.n;
        let inv = 1.0 / n as f64;
        let mut r_tilde = vec![0.0; n];
        let mut s_tilde = vec![0.0; n];
        for j in 0..n {
            for l in 0..n {
                r_tilde[j] += state.r(l, j);
                s_tilde[j] += state.s(l, j);
            }
            r_tilde[j] *= inv;
            s_tilde[j] *= inv;
        }
        Self {
            f: r_tilde.iter().map(|r| 1.0 - r).collect(),
            g: s_tilde.iter().map(|s| -s).collect(),
            f_pair: state.z.iter().map(|c| 1.0 - c.re).collect(),
            g_pair: state.z.iter().map(|c| -c.im).collect(),
            r_tilde,
            s_tilde,
        }
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    /// `(1/2N)Σⱼ(fⱼ² + gⱼ²)`.
    pub fn lyapunov(&self) -> f64 {
        lyapunov(&self.f, &self.g)
    }
}

pub fn lyapunov(f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).map(|(a, b)| a * a + b * b).sum::<f64>() / (2.0 * f.len() as f64)
}

/// Time derivatives of the real and imaginary correlation parts.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRates {
    n: usize,
    pub dr: Vec<f64>,
    pub ds: Vec<f64>,
}

impl CorrelationRates {
    pub fn dr(&self, j: usize, k: usize) -> f64 {
        self.dr[j * self.n + k]
    }

    pub fn ds(&self, j: usize, k: usize) -> f64 {
        self.ds[j * self.n + k]
    }

    pub fn dz(&self, j: usize, k: usize) -> Complex64 {
        Complex64::new(self.dr(j, k), self.ds(j, k))
    }
}

fn check_n(state_n: usize, params: &LoheParams) -> Result<()> {
    if state_n != params.n() {
        return Err(LoheError::Config(format!(
            "correlation state has {state_n} oscillators, parameters have {}",
            params.n()
        )));
    }
    Ok(())
}

/// Right-hand side of the full pairwise system, written in `(r, s)`:
///
/// ```text
/// ṙⱼₖ = −(Ωⱼ−Ωₖ)sⱼₖ + (K/2N)Σₗ[(rⱼₗ+rₗₖ)(1−rⱼₖ) + (sⱼₗ+sₗₖ)sⱼₖ]
/// ṡⱼₖ =  (Ωⱼ−Ωₖ)rⱼₖ + (K/2N)Σₗ[−(rⱼₗ+rₗₖ)sⱼₖ + (sⱼₗ+sₗₖ)(1−rⱼₖ)]
/// ```
pub fn full_rhs(state: &CorrelationState, params: &LoheParams) -> Result<CorrelationRates> {
    check_n(state.n, params)?;
    let n = state.n;
    let w = params.coupling() / (2.0 * n as f64);
    let omega = params.frequencies();
    let mut dr = vec![0.0; n * n];
    let mut ds = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            let (r, s) = (state.r(j, k), state.s(j, k));
            let (mut sum_r, mut sum_s) = (0.0, 0.0);
            for l in 0..n {
                sum_r += state.r(j, l) + state.r(l, k);
                sum_s += state.s(j, l) + state.s(l, k);
            }
            let d_omega = omega[j] - omega[k];
            dr[j * n + k] = -d_omega * s + w * (sum_r * (1.0 - r) + sum_s * s);
            ds[j * n + k] = d_omega * r + w * (-sum_r * s + sum_s * (1.0 - r));
        }
    }
    Ok(CorrelationRates { n, dr, ds })
}

/// `ż = 2iΩz + (K/2)(1 − z²)` for `z = ⟨ψ₁, ψ₂⟩` with `Ω₁ = −Ω₂ = Ω`.
pub fn two_rhs(z: Complex64, omega: f64, k_coupling: f64) -> Complex64 {
    2.0 * I * omega * z + 0.5 * k_coupling * (ONE - z * z)
}

/// Time derivatives of `r̃ⱼ` and `s̃ⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroRates {
    pub dr_tilde: Vec<f64>,
    pub ds_tilde: Vec<f64>,
}

/// Macroscopic system from its complex form
///
/// ```text
/// d⟨ζ,ψⱼ⟩/dt = −iΩⱼwⱼ + (i/N)ΣΩₗzₗⱼ + (K/2)[(1−wⱼ)wⱼ + (1/N)Σ w̄ₗ(1−zₗⱼ)],
/// ```
/// `wⱼ = ⟨ζ, ψⱼ⟩`. It is not closed: the pairwise entries are read from `state`.
pub fn macro_rhs(state: &CorrelationState, params: &LoheParams) -> Result<MacroRates> {
    check_n(state.n, params)?;
    let n = state.n;
    let inv = 1.0 / n as f64;
    let m = state.macro_correlation();
    let w: Vec<Complex64> = (0..n).map(|j| Complex64::new(m.r_tilde[j], m.s_tilde[j])).collect();
    let omega = params.frequencies();
    let half_k = 0.5 * params.coupling();
    let mut dr_tilde = vec![0.0; n];
    let mut ds_tilde = vec![0.0; n];
    for j in 0..n {
        let mut freq = Complex64::new(0.0, 0.0);
        let mut cross = Complex64::new(0.0, 0.0);
        for l in 0..n {
            freq += omega[l] * state.z(l, j);
            cross += w[l].conj() * (ONE - state.z(l, j));
        }
        let d = -I * omega[j] * w[j] + I * inv * freq + half_k * ((ONE - w[j]) * w[j] + inv * cross);
        dr_tilde[j] = d.re;
        ds_tilde[j] = d.im;
    }
    Ok(MacroRates { dr_tilde, ds_tilde })
}

/// Time derivatives of `fⱼ`, `gⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FgRates {
    pub df: Vec<f64>,
    pub dg: Vec<f64>,
}

/// Identical-oscillator system in `(f, g)`:
///
/// ```text
/// ḟⱼ = −(K/2)[2fⱼ − (fⱼ² − gⱼ²) − (1/N)Σₗ(fₗfₗⱼ + gₗgₗⱼ)]
/// ġⱼ = −(K/2)[2gⱼ − 2fⱼgⱼ − (1/N)Σₗ(fₗgₗⱼ − gₗfₗⱼ)]
/// ```
pub fn fg_rhs(state: &MacroCorrelation, params: &LoheParams) -> Result<FgRates> {
    if !params.is_identical() {
        return Err(LoheError::Contract(
            "the (f, g) system requires identical oscillators (all frequencies zero)".into(),
        ));
    }
    let n = state.n();
    check_n(n, params)?;
    let half_k = 0.5 * params.coupling();
    let inv = 1.0 / n as f64;
    let (f, g) = (&state.f, &state.g);
    let mut df = vec![0.0; n];
    let mut dg = vec![0.0; n];
    for j in 0..n {
        let (mut sum_f, mut sum_g) = (0.0, 0.0);
        for l in 0..n {
            let (fp, gp) = (state.f_pair[l * n + j], state.g_pair[l * n + j]);
            sum_f += f[l] * fp + g[l] * gp;
            sum_g += f[l] * gp - g[l] * fp;
        }
        df[j] = -half_k * (2.0 * f[j] - (f[j] * f[j] - g[j] * g[j]) - inv * sum_f);
        dg[j] = -half_k * (2.0 * g[j] - 2.0 * f[j] * g[j] - inv * sum_g);
    }
    Ok(FgRates { df, dg })
}

/// Closed form of `d/dt (1/2N)Σ(fⱼ² + gⱼ²)` along the `(f, g)` flow:
///
/// ```text
/// −(K/2N)Σⱼ(2 − fⱼ)(fⱼ² + gⱼ²) + (K/2N²)Σⱼₗ fₗⱼ(fⱼfₗ − gⱼgₗ)
/// ```
pub fn lyapunov_rate(state: &MacroCorrelation, k_coupling: f64) -> f64 {
    let n = state.n();
    let nf = n as f64;
    let (f, g) = (&state.f, &state.g);
    let diag: f64 = (0..n).map(|j| (2.0 - f[j]) * (f[j] * f[j] + g[j] * g[j])).sum();
    let mut cross = 0.0;
    for j in 0..n {
        for l in 0..n {
            cross += state.f_pair[l * n + j] * (f[j] * f[l] - g[j] * g[l]);
        }
    }
    -k_coupling / (2.0 * nf) * diag + k_coupling / (2.0 * nf * nf) * cross
}

/// `d‖ζ‖²/dt = (2/N)ΣΩₗs̃ₗ + K(‖ζ‖² − (1/N)Σ(r̃ₗ² − s̃ₗ²))`.
pub fn zeta_norm_rhs(state: &CorrelationState, params: &LoheParams) -> Result<f64> {
    check_n(state.n, params)?;
    let nf = state.n as f64;
    let m = state.macro_correlation();
    let zeta_sq = m.r_tilde.iter().sum::<f64>() / nf;
    let freq: f64 = params.frequencies().iter().zip(&m.s_tilde).map(|(w, s)| w * s).sum();
    let quad: f64 = m.r_tilde.iter().zip(&m.s_tilde).map(|(r, s)| r * r - s * s).sum::<f64>() / nf;
    Ok(2.0 / nf * freq + params.coupling() * (zeta_sq - quad))
}

/// Which reduction [`integrate`] advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeSystem {
    Full,
    Two,
    Fg,
}

impl OdeSystem {
    pub fn name(&self) -> &'static str {
        match self {
            OdeSystem::Full => "full",
            OdeSystem::Two => "two",
            OdeSystem::Fg => "fg",
        }
    }
}

impl std::str::FromStr for OdeSystem {
    type Err = LoheError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(OdeSystem::Full),
            "two" => Ok(OdeSystem::Two),
            "fg" => Ok(OdeSystem::Fg),
            other => Err(LoheError::Config(format!("unknown ODE system {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Keep every `sample_stride`-th step (and the last).
    pub sample_stride: usize,
}

impl IntegrateOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self { dt, t_end, sample_stride: 1 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.sample_stride = stride;
        self
    }

    fn steps(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) || !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(LoheError::Config(format!(
                "invalid integration window dt = {}, t_end = {}",
                self.dt, self.t_end
            )));
        }
        if self.sample_stride == 0 {
            return Err(LoheError::Config("sample_stride must be >= 1".into()));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(LoheError::Config(format!(
                "t_end = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }
}

/// Uniformly sampled correlation trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub system: OdeSystem,
    pub times: Vec<f64>,
    pub states: Vec<CorrelationState>,
    /// `dz/dt` at every sample, row-major; feeds the Hermite dense output.
    pub derivatives: Vec<Vec<Complex64>>,
    /// `(f, g)` carried by the `fg` system itself, one per sample.
    pub fg: Vec<(Vec<f64>, Vec<f64>)>,
}

impl CorrelationSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &CorrelationState {
        self.states.last().expect("series always holds the initial state")
    }

    /// Cubic Hermite interpolation of `zⱼₖ` at `t`.
    pub fn dense_z(&self, j: usize, k: usize, t: f64) -> Option<Complex64> {
        let (t0, t1) = (*self.times.first()?, *self.times.last()?);
        if !(t0..=t1).contains(&t) {
            return None;
        }
        let n = self.states[0].n();
        let idx = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            p if p >= self.times.len() => self.times.len() - 2,
            p => p - 1,
        };
        if self.times.len() == 1 {
            return Some(self.states[0].z(j, k));
        }
        let (ta, tb) = (self.times[idx], self.times[idx + 1]);
        let h = tb - ta;
        let u = (t - ta) / h;
        let (ya, yb) = (self.states[idx].z(j, k), self.states[idx + 1].z(j, k));
        let (da, db) = (self.derivatives[idx][j * n + k], self.derivatives[idx + 1][j * n + k]);
        let h00 = 2.0 * u.powi(3) - 3.0 * u * u + 1.0;
        let h10 = u.powi(3) - 2.0 * u * u + u;
        let h01 = -2.0 * u.powi(3) + 3.0 * u * u;
        let h11 = u.powi(3) - u * u;
        Some(ya * h00 + da * (h10 * h) + yb * h01 + db * (h11 * h))
    }

    /// NDJSON, one object per sample with keys
    /// `t, r, s, r_tilde, s_tilde, zeta_norm_sq` (plus `f, g, lyapunov` for `fg`).
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for (i, state) in self.states.iter().enumerate() {
            let m = self.macro_at(i);
            let n = state.n();
            let rows = |part: fn(Complex64) -> f64| -> Vec<Vec<f64>> {
                (0..n).map(|j| (0..n).map(|k| part(state.z(j, k))).collect()).collect()
            };
            let record = SeriesRecord {
                t: self.times[i],
                r: rows(|c| c.re),
                s: rows(|c| c.im),
                zeta_norm_sq: m.r_tilde.iter().sum::<f64>() / n as f64,
                r_tilde: &m.r_tilde,
                s_tilde: &m.s_tilde,
                f: (self.system == OdeSystem::Fg).then_some(&m.f),
                g: (self.system == OdeSystem::Fg).then_some(&m.g),
                lyapunov: (self.system == OdeSystem::Fg).then(|| m.lyapunov()),
            };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Flattened CSV. Columns: `t`, `r_j_k` (row-major), `s_j_k`
    /// (row-major), `r_tilde_j`, `s_tilde_j`, `zeta_norm_sq`, and for the
    /// `fg` system `f_j`, `g_j`, `lyapunov`.
    pub fn to_csv(&self) -> String {
        let n = self.states[0].n();
        let fg = self.system == OdeSystem::Fg;
        let mut header = vec!["t".to_string()];
        for part in ["r", "s"] {
            for j in 0..n {
                for k in 0..n {
                    header.push(format!("{part}_{j}_{k}"));
                }
            }
        }
        // f, g follow zeta_norm_sq so the shared columns keep their order
        for part in ["r_tilde", "s_tilde"] {
            header.extend((0..n).map(|j| format!("{part}_{j}")));
        }
        header.push("zeta_norm_sq".into());
        if fg {
            for part in ["f", "g"] {
                header.extend((0..n).map(|j| format!("{part}_{j}")));
            }
            header.push("lyapunov".into());
        }
        let mut out = header.join(",");
        out.push('\n');
        for (i, state) in self.states.iter().enumerate() {
            let m = self.macro_at(i);
            let mut row = vec![fmt_f64(self.times[i])];
            row.extend(state.entries().iter().map(|c| fmt_f64(c.re)));
            row.extend(state.entries().iter().map(|c| fmt_f64(c.im)));
            row.extend(m.r_tilde.iter().map(|v| fmt_f64(*v)));
            row.extend(m.s_tilde.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(m.r_tilde.iter().sum::<f64>() / n as f64));
            if fg {
                row.extend(m.f.iter().map(|v| fmt_f64(*v)));
                row.extend(m.g.iter().map(|v| fmt_f64(*v)));
                row.push(fmt_f64(m.lyapunov()));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Macroscopic view of sample `i`; for `fg` the carried `(f, g)` are used.
    pub fn macro_at(&self, i: usize) -> MacroCorrelation {
        let mut m = self.states[i].macro_correlation();
        if let Some((f, g)) = self.fg.get(i) {
            m.f = f.clone();
            m.g = g.clone();
            m.r_tilde = f.iter().map(|v| 1.0 - v).collect();
            m.s_tilde = g.iter().map(|v| -v).collect();
        }
        m
    }
}

#[derive(Serialize)]
struct SeriesRecord<'a> {
    t: f64,
    r: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    r_tilde: &'a [f64],
    s_tilde: &'a [f64],
    zeta_norm_sq: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    f: Option<&'a Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    g: Option<&'a Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lyapunov: Option<f64>,
}

/// Shortest round-trip float text, shared by every emitted file.
pub fn fmt_f64(v: f64) -> String {
    serde_json::to_string(&v).expect("f64 serializes")
}

fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| ((j + 1)..n).map(move |k| (j, k))).collect()
}

fn rk4_step(y: &mut [Complex64], dt: f64, f: &dyn Fn(&[Complex64]) -> Vec<Complex64>) {
    let k1 = f(y);
    let shift = |base: &[Complex64], k: &[Complex64], h: f64| -> Vec<Complex64> {
        base.iter().zip(k).map(|(a, b)| a + h * b).collect()
    };
    let k2 = f(&shift(y, &k1, 0.5 * dt));
    let k3 = f(&shift(y, &k2, 0.5 * dt));
    let k4 = f(&shift(y, &k3, dt));
    for (i, v) in y.iter_mut().enumerate() {
        *v += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// The packed state vector of each system and its right-hand side.
struct Packed<'a> {
    system: OdeSystem,
    n: usize,
    pairs: Vec<(usize, usize)>,
    params: &'a LoheParams,
}

impl Packed<'_> {
    fn pack(&self, state: &CorrelationState) -> Vec<Complex64> {
        match self.system {
            OdeSystem::Full => self.pairs.iter().map(|&(j, k)| state.z(j, k)).collect(),
            OdeSystem::Two => vec![state.z(0, 1)],
            OdeSystem::Fg => {
                let m = state.macro_correlation();
                let mut y: Vec<Complex64> =
                    (0..self.n).map(|j| Complex64::new(m.f[j], m.g[j])).collect();
                y.extend(self.pairs.iter().map(|&(j, k)| ONE - state.z(j, k)));
                y
            }
        }
    }

    fn unpack(&self, time: f64, y: &[Complex64]) -> CorrelationState {
        let n = self.n;
        let mut z = vec![ONE; n * n];
        let offset = if self.system == OdeSystem::Fg { n } else { 0 };
        for (p, &(j, k)) in self.pairs.iter().enumerate() {
            let v = match self.system {
                OdeSystem::Fg => ONE - y[offset + p],
                _ => y[p],
            };
            z[j * n + k] = v;
        }
        CorrelationState::from_upper(time, n, &z)
    }

    fn fg_of(&self, y: &[Complex64]) -> Option<(Vec<f64>, Vec<f64>)> {
        (self.system == OdeSystem::Fg)
            .then(|| (y[..self.n].iter().map(|c| c.re).collect(), y[..self.n].iter().map(|c| c.im).collect()))
    }

    fn rhs(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        match self.system {
            OdeSystem::Full => {
                let state = self.unpack(0.0, y);
                let rates = full_rhs(&state, self.params).expect("sizes checked");
                self.pairs.iter().map(|&(j, k)| rates.dz(j, k)).collect()
            }
            OdeSystem::Two => {
                vec![two_rhs(y[0], self.params.frequencies()[0], self.params.coupling())]
            }
            OdeSystem::Fg => {
                let p = self.pair_matrix(y);
                let macro_state = MacroCorrelation {
                    r_tilde: y[..n].iter().map(|c| 1.0 - c.re).collect(),
                    s_tilde: y[..n].iter().map(|c| -c.im).collect(),
                    f: y[..n].iter().map(|c| c.re).collect(),
                    g: y[..n].iter().map(|c| c.im).collect(),
                    f_pair: p.iter().map(|c| c.re).collect(),
                    g_pair: p.iter().map(|c| c.im).collect(),
                };
                let rates = fg_rhs(&macro_state, self.params).expect("checked identical");
                let mut out: Vec<Complex64> =
                    (0..n).map(|j| Complex64::new(rates.df[j], rates.dg[j])).collect();
                // pairwise: d(1 − zⱼₖ)/dt = −(K/2)(2 − F̄ⱼ − Fₖ)(1 − zⱼₖ)
                let half_k = 0.5 * self.params.coupling();
                for &(j, k) in &self.pairs {
                    let factor = 2.0 * ONE - y[j].conj() - y[k];
                    out.push(-half_k * factor * p[j * n + k]);
                }
                out
            }
        }
    }

    /// `Pⱼₖ = 1 − zⱼₖ` as a full Hermitian matrix with zero diagonal.
    fn pair_matrix(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut p = vec![Complex64::new(0.0, 0.0); n * n];
        for (idx, &(j, k)) in self.pairs.iter().enumerate() {
            p[j * n + k] = y[n + idx];
            p[k * n + j] = y[n + idx].conj();
        }
        p
    }

    /// `dz/dt` as a row-major matrix, for dense output.
    fn z_derivative(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let d = self.rhs(y);
        let offset = if self.system == OdeSystem::Fg { n } else { 0 };
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for (p, &(j, k)) in self.pairs.iter().enumerate() {
            let v = if self.system == OdeSystem::Fg { -d[offset + p] } else { d[p] };
            out[j * n + k] = v;
            out[k * n + j] = v.conj();
        }
        out
    }
}

/// Fixed-step RK4. Only the upper triangle is integrated and mirrored, so
/// Hermitian symmetry holds exactly along the series.
pub fn integrate(
    system: OdeSystem,
    initial: &CorrelationState,
    params: &LoheParams,
    opts: IntegrateOptions,
) -> Result<CorrelationSeries> {
    check_n(initial.n, params)?;
    let steps = opts.steps()?;
    match system {
        OdeSystem::Two => {
            if initial.n != 2 || (params.frequencies()[0] + params.frequencies()[1]).abs() > 1e-12 {
                return Err(LoheError::Contract(
                    "the two-oscillator equation needs N = 2 with Ω₁ = −Ω₂".into(),
                ));
            }
        }
        OdeSystem::Fg if !params.is_identical() => {
            return Err(LoheError::Contract(
                "the (f, g) system requires identical oscillators (all frequencies zero)".into(),
            ));
        }
        _ => {}
    }
    let packed = Packed { system, n: initial.n, pairs: upper_pairs(initial.n), params };
    let mut y = packed.pack(initial);
    let t0 = initial.time;
    let mut series = CorrelationSeries {
        system,
        times: Vec::new(),
        states: Vec::new(),
        derivatives: Vec::new(),
        fg: Vec::new(),
    };
    let push = |series: &mut CorrelationSeries, t: f64, y: &[Complex64]| {
        series.times.push(t);
        series.states.push(packed.unpack(t, y));
        series.derivatives.push(packed.z_derivative(y));
        if let Some(fg) = packed.fg_of(y) {
            series.fg.push(fg);
        }
    };
    push(&mut series, t0, &y);
    let f = |v: &[Complex64]| packed.rhs(v);
    for step in 1..=steps {
        rk4_step(&mut y, opts.dt, &f);
        let t = t0 + step as f64 * opts.dt;
        if y.iter().any(|c| !(c.re.is_finite() && c.im.is_finite()) || c.norm() > 1e3) {
            return Err(LoheError::Divergence { step, time: t });
        }
        if step % opts.sample_stride == 0 || step == steps {
            push(&mut series, t, &y);
        }
    }
    Ok(series)
}

/// Richardson estimate of the RK4 error at `t_end`: `max|z_h − z_{h/2}|/15`.
pub fn richardson_error(
    system: OdeSystem,
    initial: &CorrelationState,
    params: &LoheParams,
    opts: IntegrateOptions,
) -> Result<f64> {
    let coarse = integrate(system, initial, params, IntegrateOptions { sample_stride: usize::MAX, ..opts })?;
    let fine_opts = IntegrateOptions { dt: 0.5 * opts.dt, sample_stride: usize::MAX, ..opts };
    let fine = integrate(system, initial, params, fine_opts)?;
    Ok(coarse.last().max_difference(fine.last()) / 15.0)
}

/// Return period of `zⱼₖ(t)`: mean spacing of the crossings of
/// `Re zⱼₖ = Re zⱼₖ(0)` taken in the same direction as the motion at `t = 0`.
pub fn detect_period(series: &CorrelationSeries, j: usize, k: usize) -> Option<f64> {
    if series.len() < 3 {
        return None;
    }
    let n = series.states[0].n();
    let z0 = series.states[0].z(j, k);
    let d0 = series.derivatives[0][j * n + k];
    // use whichever component moves at t = 0
    let (use_re, dir) = if d0.re.abs() >= d0.im.abs() { (true, d0.re.signum()) } else { (false, d0.im.signum()) };
    if dir == 0.0 {
        return None;
    }
    let part = |c: Complex64| if use_re { c.re } else { c.im };
    let level = part(z0);
    let g = |t: f64| part(series.dense_z(j, k, t).expect("inside span")) - level;
    let mut crossings = Vec::new();
    for i in 1..series.len() - 1 {
        let (ta, tb) = (series.times[i], series.times[i + 1]);
        let (ga, gb) = (g(ta), g(tb));
        let upward = dir > 0.0 && ga < 0.0 && gb >= 0.0;
        let downward = dir < 0.0 && ga > 0.0 && gb <= 0.0;
        if upward || downward {
            let (mut lo, mut hi) = (ta, tb);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (g(mid) < 0.0) == (ga < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            crossings.push(0.5 * (lo + hi));
        }
    }
    let first = *crossings.first()?;
    let t0 = series.times[0];
    if crossings.len() == 1 {
        return Some(first - t0);
    }
    let last = *crossings.last()?;
    // the first crossing is one period after t0; the rest add one each
    Some((last - t0) / crossings.len() as f64)
}
