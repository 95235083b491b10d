//! Observables along a trajectory: pair distances, energies, Madelung
//! densities, synchronization classification and rate fits.

use num_complex::Complex64;
use serde::Serialize;

use crate::correlation::CorrelationState;
use crate::error::{LoheError, Result};
use crate::grid::{SpectralGrid, WaveField};
use crate::model::{order_parameter, EnsembleState, ModelConfig};

/// Quadratic energies `Q(u) = ∫ ½|∇u|² + V|u|²` of the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `E = (1/N)ΣEⱼ`.
    pub total: f64,
    /// `Eⱼ = Q(ψⱼ)`.
    pub per_osc: Vec<f64>,
    /// `Eⱼₖ = Q(ψⱼ − ψₖ)`, row-major.
    pub pair: Vec<f64>,
    /// `Ẽ = (1/2N²)ΣEⱼₖ`.
    pub relative: f64,
    /// `E_z = Q(ζ)`.
    pub zeta_energy: f64,
    /// `Q(e^{iφ}ψ₁ − ψ₂)` for two oscillators with `Λ ≤ 1`.
    pub diff_energy_two: Option<f64>,
}

/// Every observable at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    n: usize,
    /// `‖ψⱼ − ψₖ‖`, row-major.
    pub pair_l2: Vec<f64>,
    /// `‖ψⱼ − ψₖ‖_{H¹}` with `‖u‖²_{H¹} = ‖u‖² + ‖∇u‖²`.
    pub pair_h1: Vec<f64>,
    pub zeta_norm: f64,
    pub correlations: CorrelationState,
    pub energies: EnergyReport,
    pub mass_drift: Vec<f64>,
    /// `‖ρⱼ − ρₖ‖_{L¹}` with `ρ = |ψ|²`.
    pub rho_l1: Vec<f64>,
    /// `‖Jⱼ − Jₖ‖_{L¹}` with `J = Im(ψ̄∇ψ)`.
    pub current_l1: Vec<f64>,
}

impl DiagnosticsRecord {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pair_distance(&self, j: usize, k: usize) -> f64 {
        self.pair_l2[j * self.n + k]
    }

    pub fn max_pair_distance(&self) -> f64 {
        self.pair_l2.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn max_rho_l1(&self) -> f64 {
        self.rho_l1.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn max_current_l1(&self) -> f64 {
        self.current_l1.iter().fold(0.0, |m, v| m.max(*v))
    }

    /// One NDJSON line, keys in a fixed order.
    pub fn to_json(&self) -> String {
        let n = self.n;
        let rows = |v: &[f64]| -> Vec<Vec<f64>> { v.chunks(n).map(<[f64]>::to_vec).collect() };
        let z = self.correlations.entries();
        let record = RecordJson {
            t: self.time,
            pair_l2: rows(&self.pair_l2),
            pair_h1: rows(&self.pair_h1),
            zeta_norm: self.zeta_norm,
            r: z.chunks(n).map(|row| row.iter().map(|c| c.re).collect()).collect(),
            s: z.chunks(n).map(|row| row.iter().map(|c| c.im).collect()).collect(),
            energy: EnergyJson {
                total: self.energies.total,
                per_osc: &self.energies.per_osc,
                pair: rows(&self.energies.pair),
                relative: self.energies.relative,
                zeta: self.energies.zeta_energy,
                diff_two: self.energies.diff_energy_two,
            },
            mass_drift: &self.mass_drift,
            rho_l1: rows(&self.rho_l1),
            current_l1: rows(&self.current_l1),
        };
        serde_json::to_string(&record).expect("record serializes")
    }
}

#[derive(Serialize)]
struct RecordJson<'a> {
    t: f64,
    pair_l2: Vec<Vec<f64>>,
    pair_h1: Vec<Vec<f64>>,
    zeta_norm: f64,
    r: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    energy: EnergyJson<'a>,
    mass_drift: &'a [f64],
    rho_l1: Vec<Vec<f64>>,
    current_l1: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct EnergyJson<'a> {
    total: f64,
    per_osc: &'a [f64],
    pair: Vec<Vec<f64>>,
    relative: f64,
    zeta: f64,
    diff_two: Option<f64>,
}

/// NDJSON for a record stream.
pub fn records_ndjson(records: &[DiagnosticsRecord]) -> String {
    records.iter().map(|r| r.to_json() + "\n").collect()
}

pub fn compute_record(state: &EnsembleState, config: &ModelConfig) -> DiagnosticsRecord {
    compute_record_with(&SpectralGrid::new(*config.grid()), state, config)
}

/// A field and its spectral gradient.
struct Differentiated {
    values: Vec<Complex64>,
    grad: Vec<Vec<Complex64>>,
}

impl Differentiated {
    fn combine(&self, a: Complex64, other: &Differentiated, b: Complex64) -> Differentiated {
        let lin = |x: &[Complex64], y: &[Complex64]| -> Vec<Complex64> {
            x.iter().zip(y).map(|(u, v)| a * u + b * v).collect()
        };
        Differentiated {
            values: lin(&self.values, &other.values),
            grad: self.grad.iter().zip(&other.grad).map(|(x, y)| lin(x, y)).collect(),
        }
    }

    fn l2_sq(&self, dv: f64) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * dv
    }

    fn grad_sq(&self, dv: f64) -> f64 {
        self.grad.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>() * dv
    }

    fn energy(&self, potential: &[f64], dv: f64) -> f64 {
        let pot: f64 = self.values.iter().zip(potential).map(|(u, v)| v * u.norm_sqr()).sum::<f64>() * dv;
        0.5 * self.grad_sq(dv) + pot
    }

    fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// `J = Im(ψ̄∇ψ)`, one vector per axis.
    fn current(&self) -> Vec<Vec<f64>> {
        self.grad
            .iter()
            .map(|g| self.values.iter().zip(g).map(|(p, d)| (p.conj() * d).im).collect())
            .collect()
    }
}

/// All differences are formed on the fields themselves, so distances near
/// synchrony do not suffer the cancellation of `2(1 − rⱼₖ)`.
pub fn compute_record_with(
    spectral: &SpectralGrid,
    state: &EnsembleState,
    config: &ModelConfig,
) -> DiagnosticsRecord {
    let n = state.n();
    let dv = state.grid().cell_volume();
    let potential = config.potential();
    let fields: Vec<Differentiated> = state
        .fields()
        .iter()
        .map(|f| Differentiated { values: f.values().to_vec(), grad: spectral.gradient(f.values()) })
        .collect();
    let one = Complex64::new(1.0, 0.0);
    let per_osc: Vec<f64> = fields.iter().map(|f| f.energy(potential, dv)).collect();
    let densities: Vec<Vec<f64>> = fields.iter().map(Differentiated::density).collect();
    let currents: Vec<Vec<Vec<f64>>> = fields.iter().map(Differentiated::current).collect();
    let mut pair_l2 = vec![0.0; n * n];
    let mut pair_h1 = vec![0.0; n * n];
    let mut pair_energy = vec![0.0; n * n];
    let mut rho_l1 = vec![0.0; n * n];
    let mut current_l1 = vec![0.0; n * n];
    for j in 0..n {
        for k in (j + 1)..n {
            let d = fields[j].combine(one, &fields[k], -one);
            let l2 = d.l2_sq(dv);
            let e = d.energy(potential, dv);
            let h1 = (l2 + d.grad_sq(dv)).sqrt();
            let rho: f64 = densities[j].iter().zip(&densities[k]).map(|(a, b)| (a - b).abs()).sum::<f64>() * dv;
            let points = densities[j].len();
            let cur: f64 = (0..points)
                .map(|i| {
                    currents[j]
                        .iter()
                        .zip(&currents[k])
                        .map(|(a, b)| (a[i] - b[i]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
                * dv;
            for (m, v) in [(&mut pair_l2, l2.sqrt()), (&mut pair_h1, h1), (&mut pair_energy, e), (&mut rho_l1, rho), (&mut current_l1, cur)] {
                m[j * n + k] = v;
                m[k * n + j] = v;
            }
        }
    }
    let nf = n as f64;
    let zeta = fields.iter().skip(1).fold(
        Differentiated { values: fields[0].values.clone(), grad: fields[0].grad.clone() },
        |acc, f| acc.combine(one, f, one),
    );
    let zeta = zeta.combine(Complex64::new(1.0 / nf, 0.0), &fields[0], Complex64::new(0.0, 0.0));
    let diff_energy_two = match (n, config.lambda()) {
        (2, Some(lam)) if lam <= 1.0 => {
            let phase = Complex64::from_polar(1.0, lam.asin());
            Some(fields[0].combine(phase, &fields[1], -one).energy(potential, dv))
        }
        _ => None,
    };
    let energies = EnergyReport {
        total: per_osc.iter().sum::<f64>() / nf,
        relative: pair_energy.iter().sum::<f64>() / (2.0 * nf * nf),
        zeta_energy: zeta.energy(potential, dv),
        per_osc,
        pair: pair_energy,
        diff_energy_two,
    };
    DiagnosticsRecord {
        time: state.time,
        n,
        pair_l2,
        pair_h1,
        zeta_norm: order_parameter(state).norm,
        correlations: CorrelationState::from_ensemble(state),
        energies,
        mass_drift: state.mass_drift(),
        rho_l1,
        current_l1,
    }
}

/// Energy of a single field, for tests and scenario summaries.
pub fn field_energy(spectral: &SpectralGrid, field: &WaveField, potential: &[f64]) -> f64 {
    let d = Differentiated { values: field.values().to_vec(), grad: spectral.gradient(field.values()) };
    d.energy(potential, field.grid().cell_volume())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncClass {
    PhaseSync,
    FrequencySync,
    None,
}

impl SyncClass {
    pub fn name(&self) -> &'static str {
        match self {
            SyncClass::PhaseSync => "phase_sync",
            SyncClass::FrequencySync => "frequency_sync",
            SyncClass::None => "none",
        }
    }
}

/// Tail statistics behind a classification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncEvidence {
    pub tail_start: f64,
    pub tail_samples: usize,
    pub max_pair_distance: f64,
    /// Mean and `max − min` over the tail, one per pair `j < k`.
    pub pair_means: Vec<f64>,
    pub pair_variations: Vec<f64>,
    pub zeta_norm_mean: f64,
    pub zeta_norm_variation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncReport {
    pub class: SyncClass,
    pub evidence: SyncEvidence,
}

/// The minimal time series a classification needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyncObservables {
    pub times: Vec<f64>,
    /// Per sample, `‖ψⱼ − ψₖ‖` for `j < k` in row-major order.
    pub pair_distances: Vec<Vec<f64>>,
    pub zeta_norm: Vec<f64>,
}

impl SyncObservables {
    pub fn from_records(records: &[DiagnosticsRecord]) -> Self {
        let mut out = Self::default();
        for r in records {
            let n = r.n();
            out.times.push(r.time);
            out.pair_distances
                .push((0..n).flat_map(|j| ((j + 1)..n).map(move |k| (j, k))).map(|(j, k)| r.pair_distance(j, k)).collect());
            out.zeta_norm.push(r.zeta_norm);
        }
        out
    }

    /// From correlations alone: `‖ψⱼ − ψₖ‖ = √(2(1 − rⱼₖ))`, `‖ζ‖ = √(‖ζ‖²)`.
    pub fn from_correlations(states: &[CorrelationState]) -> Self {
        let mut out = Self::default();
        for s in states {
            let n = s.n();
            out.times.push(s.time);
            out.pair_distances.push(
                (0..n)
                    .flat_map(|j| ((j + 1)..n).map(move |k| (j, k)))
                    .map(|(j, k)| (2.0 * (1.0 - s.r(j, k))).max(0.0).sqrt())
                    .collect(),
            );
            out.zeta_norm.push(s.zeta_norm_sq().max(0.0).sqrt());
        }
        out
    }
}

pub const MIN_SYNC_SAMPLES: usize = 50;

pub fn classify_sync(records: &[DiagnosticsRecord], tol: f64) -> Result<SyncReport> {
    classify_observables(&SyncObservables::from_records(records), tol)
}

/// Final-quarter test: phase sync if every pair distance stays below `tol`
/// and `‖ζ‖` within `tol` of 1; frequency sync if every distance and `‖ζ‖`
/// vary by at most `tol` with a nonzero limit and `‖ζ‖ ∈ (tol, 1 − tol)`.
pub fn classify_observables(obs: &SyncObservables, tol: f64) -> Result<SyncReport> {
    let len = obs.times.len();
    if len < MIN_SYNC_SAMPLES {
        return Err(LoheError::SeriesTooShort(format!(
            "classification needs at least {MIN_SYNC_SAMPLES} samples, got {len}"
        )));
    }
    let start = len - len / 4;
    let tail = start..len;
    let pairs = obs.pair_distances[0].len();
    let stats = |values: &mut dyn Iterator<Item = f64>| -> (f64, f64, f64) {
        let (mut lo, mut hi, mut sum, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.0);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
            count += 1.0;
        }
        (sum / count, hi - lo, hi)
    };
    let mut pair_means = Vec::with_capacity(pairs);
    let mut pair_variations = Vec::with_capacity(pairs);
    let mut max_pair_distance: f64 = 0.0;
    for p in 0..pairs {
        let (mean, var, hi) = stats(&mut tail.clone().map(|i| obs.pair_distances[i][p]));
        pair_means.push(mean);
        pair_variations.push(var);
        max_pair_distance = max_pair_distance.max(hi);
    }
    let (zeta_norm_mean, zeta_norm_variation, _) = stats(&mut tail.clone().map(|i| obs.zeta_norm[i]));
    let zeta_gap = tail.clone().map(|i| (obs.zeta_norm[i] - 1.0).abs()).fold(0.0, f64::max);
    let class = if max_pair_distance <= tol && zeta_gap <= tol {
        SyncClass::PhaseSync
    } else if pair_variations.iter().all(|v| *v <= tol)
        && zeta_norm_variation <= tol
        && pair_means.iter().any(|m| *m > tol)
        && zeta_norm_mean > tol
        && zeta_norm_mean < 1.0 - tol
    {
        SyncClass::FrequencySync
    } else {
        SyncClass::None
    };
    Ok(SyncReport {
        class,
        evidence: SyncEvidence {
            tail_start: obs.times[start],
            tail_samples: len - start,
            max_pair_distance,
            pair_means,
            pair_variations,
            zeta_norm_mean,
            zeta_norm_variation,
        },
    })
}

/// Least-squares fit of `log y` against `t` (or `log t`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// `−slope`: positive for decay.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    /// Slope of `log y` against `log t`.
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Last half of the span with the first tenth of that half dropped.
pub fn default_window(times: &[f64]) -> (f64, f64) {
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return (0.0, 0.0);
    };
    let mid = 0.5 * (t0 + t1);
    (mid + 0.1 * (t1 - mid), t1)
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(LoheError::InvalidFit("degenerate window".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok((slope, intercept, r_squared))
}

fn window_samples(times: &[f64], ys: &[f64], window: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    if times.len() != ys.len() {
        return Err(LoheError::InvalidFit("times and values differ in length".into()));
    }
    let (a, b) = window;
    if !(a < b) {
        return Err(LoheError::InvalidFit(format!("degenerate window [{a}, {b}]")));
    }
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return Err(LoheError::InvalidFit("empty series".into()));
    };
    let slack = 1e-9 * (t1 - t0).abs().max(1.0);
    if a < t0 - slack || b > t1 + slack {
        return Err(LoheError::InvalidFit(format!("window [{a}, {b}] outside the series span [{t0}, {t1}]")));
    }
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (t, y) in times.iter().zip(ys) {
        if *t >= a - slack && *t <= b + slack {
            if !(*y > 0.0) {
                return Err(LoheError::InvalidFit(format!("nonpositive value {y} at t = {t}")));
            }
            xs.push(*t);
            vs.push(y.ln());
        }
    }
    if xs.len() < 2 {
        return Err(LoheError::InvalidFit("fewer than two samples in the window".into()));
    }
    Ok((xs, vs))
}

/// Exponential rate: `log y ≈ c − rate·t` on `window`.
pub fn fit_rate(times: &[f64], ys: &[f64], window: (f64, f64)) -> Result<RateFit> {
    let (xs, ls) = window_samples(times, ys, window)?;
    let (slope, intercept, r_squared) = linear_fit(&xs, &ls)?;
    Ok(RateFit { rate: -slope, intercept, r_squared, samples: xs.len() })
}

/// Algebraic exponent: `log y ≈ c + exponent·log t` on `window` (`t > 0`).
pub fn fit_power_law(times: &[f64], ys: &[f64], window: (f64, f64)) -> Result<PowerLawFit> {
    if !(window.0 > 0.0) {
        return Err(LoheError::InvalidFit("power-law window must start at t > 0".into()));
    }
    let (xs, ls) = window_samples(times, ys, window)?;
    let logs: Vec<f64> = xs.iter().map(|t| t.ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(&logs, &ls)?;
    Ok(PowerLawFit { exponent: slope, intercept, r_squared, samples: xs.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBound {
    /// `max_t E(t)/E(0)`.
    pub c_measured: f64,
    pub bounded: bool,
    /// Fitted decay of `Ẽ` on the default window, when it stays positive.
    pub relative_decay: Option<RateFit>,
}

/// Measures the constant in `E(t) ≤ C·E(0)`; `E(0)` must exceed
/// `rtol·max_t|E(t)|`.
pub fn energy_bound_check(times: &[f64], reports: &[EnergyReport], rtol: f64) -> Result<EnergyBound> {
    let Some(first) = reports.first() else {
        return Err(LoheError::SeriesTooShort("no energy samples".into()));
    };
    if times.len() != reports.len() {
        return Err(LoheError::InvalidFit("times and reports differ in length".into()));
    }
    let e0 = first.total;
    let scale = reports.iter().fold(0.0, |m: f64, r| m.max(r.total.abs()));
    if !(e0 > rtol * scale) || !(e0 > 0.0) {
        return Err(LoheError::Contract(format!("E(0) = {e0} is not positive")));
    }
    let c_measured = reports.iter().map(|r| r.total / e0).fold(f64::NEG_INFINITY, f64::max);
    let relative: Vec<f64> = reports.iter().map(|r| r.relative).collect();
    let relative_decay = fit_rate(times, &relative, default_window(times)).ok();
    Ok(EnergyBound { c_measured, bounded: c_measured.is_finite(), relative_decay })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::initial::{gaussian, plane_wave_mixture, random_ensemble, GaussianSpec, RandomEnsembleSpec};
    use crate::model::{LoheParams, Potential};

    fn config(n: usize, grid: GridSpec, potential: Potential) -> ModelConfig {
        ModelConfig::new(LoheParams::identical(1.0, n).unwrap(), grid, &potential).unwrap()
    }

    #[test]
    fn identical_ensemble() {
        let g = GridSpec::line(128, 20.0).unwrap();
        let f = gaussian(&g, &GaussianSpec::centered_at(10.0, 1.0)).unwrap();
        let state = EnsembleState::new(0.0, vec![f.clone(), f.clone(), f]).unwrap();
        let rec = compute_record(&state, &config(3, g, Potential::CosineWell { amplitude: 0.5 }));
        assert!(rec.pair_l2.iter().chain(&rec.pair_h1).all(|v| *v == 0.0));
        assert!((rec.zeta_norm - 1.0).abs() < 1e-14);
        assert_eq!(rec.energies.relative, 0.0);
        assert!((rec.energies.total - rec.energies.zeta_energy).abs() < 1e-13);
    }

    #[test]
    fn orthogonal_pair() {
        let g = GridSpec::line(64, 10.0).unwrap();
        let a = plane_wave_mixture(&g, &[(vec![1], Complex64::new(1.0, 0.0))]).unwrap();
        let b = plane_wave_mixture(&g, &[(vec![3], Complex64::new(1.0, 0.0))]).unwrap();
        let state = EnsembleState::new(0.0, vec![a, b]).unwrap();
        let rec = compute_record(&state, &config(2, g, Potential::Zero));
        assert!((rec.zeta_norm.powi(2) - 0.5).abs() < 1e-14);
        assert!((rec.pair_distance(0, 1) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn plane_wave_energy_and_current() {
        // normalized e^{ikx}: E = k²/2 and J = k/L pointwise, so ‖J₁ − J₂‖_{L¹} = |k₁ − k₂|
        let (l, m1, m2) = (10.0, 2i64, -3i64);
        let g = GridSpec::line(64, l).unwrap();
        let a = plane_wave_mixture(&g, &[(vec![m1], Complex64::new(1.0, 0.0))]).unwrap();
        let b = plane_wave_mixture(&g, &[(vec![m2], Complex64::new(0.0, 1.0))]).unwrap();
        let state = EnsembleState::new(0.0, vec![a, b]).unwrap();
        let rec = compute_record(&state, &config(2, g, Potential::Zero));
        let k = |m: i64| 2.0 * std::f64::consts::PI * m as f64 / l;
        assert!((rec.energies.per_osc[0] - 0.5 * k(m1).powi(2)).abs() < 1e-12);
        assert!((rec.energies.per_osc[1] - 0.5 * k(m2).powi(2)).abs() < 1e-12);
        assert!((rec.current_l1[1] - (k(m1) - k(m2)).abs()).abs() < 1e-12);
        assert!(rec.rho_l1[1] < 1e-14);
    }

    #[test]
    fn identities_on_random_ensembles() {
        let g = GridSpec::line(256, 30.0).unwrap();
        for seed in 0..4 {
            let state = random_ensemble(&g, &RandomEnsembleSpec::new(4), seed).unwrap();
            let cfg = config(4, g, Potential::CosineWell { amplitude: 0.7 });
            let rec = compute_record(&state, &cfg);
            let e = &rec.energies;
            assert!((e.total - e.zeta_energy - e.relative).abs() < 1e-10);
            // polarization: Re∫(½∇ψ̄ⱼ·∇ψₖ + Vψ̄ⱼψₖ) = ½(Eⱼ + Eₖ − Eⱼₖ)
            let spectral = SpectralGrid::new(g);
            let dv = g.cell_volume();
            for (j, k) in [(0, 1), (1, 3), (2, 3)] {
                let gj = spectral.gradient(state.fields()[j].values());
                let gk = spectral.gradient(state.fields()[k].values());
                let kin: f64 = gj[0].iter().zip(&gk[0]).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * dv;
                let pot: f64 = state.fields()[j]
                    .values()
                    .iter()
                    .zip(state.fields()[k].values())
                    .zip(cfg.potential())
                    .map(|((a, b), v)| v * (a.conj() * b).re)
                    .sum::<f64>()
                    * dv;
                let lhs = 0.5 * kin + pot;
                let rhs = 0.5 * (e.per_osc[j] + e.per_osc[k] - e.pair[j * 4 + k]);
                assert!((lhs - rhs).abs() < 1e-10);
            }
            for j in 0..4 {
                for k in 0..4 {
                    let d = rec.pair_distance(j, k);
                    assert!((d * d - 2.0 * (1.0 - rec.correlations.r(j, k))).abs() < 1e-12);
                    assert!(rec.pair_h1[j * 4 + k] >= d);
                    assert_eq!(rec.pair_l2[j * 4 + k], rec.pair_l2[k * 4 + j]);
                }
                let mass: f64 = state.fields()[j].values().iter().map(|v| v.norm_sqr()).sum::<f64>() * dv;
                assert!((mass - 1.0).abs() < 1e-10);
            }
            let line = rec.to_json();
            let v: serde_json::Value = serde_json::from_str(&line).unwrap();
            assert!(v["energy"]["diff_two"].is_null());
        }
    }

    #[test]
    fn real_fields_carry_no_current() {
        let g = GridSpec::line(128, 20.0).unwrap();
        let a = gaussian(&g, &GaussianSpec::centered_at(9.0, 1.0)).unwrap();
        let b = gaussian(&g, &GaussianSpec::centered_at(11.0, 1.3)).unwrap();
        let state = EnsembleState::new(0.0, vec![a, b]).unwrap();
        let rec = compute_record(&state, &config(2, g, Potential::Zero));
        assert!(rec.current_l1[1] < 1e-15);
        assert!(rec.rho_l1[1] <= 2.0 * rec.pair_distance(0, 1));
    }

    #[test]
    fn fits() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = times.iter().map(|t| (-3.0 * t).exp()).collect();
        let fit = fit_rate(&times, &ys, (1.0, 9.0)).unwrap();
        assert!((fit.rate - 3.0).abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let ps: Vec<f64> = times.iter().map(|t| 2.0 / (t + 1e-300)).collect();
        let pfit = fit_power_law(&times, &ps, (1.0, 10.0)).unwrap();
        assert!((pfit.exponent + 1.0).abs() < 1e-9);
        assert!(fit_rate(&times, &ys, (3.0, 3.0)).is_err());
        assert!(fit_rate(&times, &ys, (3.0, 30.0)).is_err());
        let neg: Vec<f64> = times.iter().map(|t| t - 5.0).collect();
        assert!(fit_rate(&times, &neg, (1.0, 9.0)).is_err());
        let (a, b) = default_window(&times);
        assert!((a - 5.5).abs() < 1e-12 && (b - 10.0).abs() < 1e-12);
    }

    fn obs(times: &[f64], dist: impl Fn(f64) -> f64, zeta: impl Fn(f64) -> f64) -> SyncObservables {
        SyncObservables {
            times: times.to_vec(),
            pair_distances: times.iter().map(|t| vec![dist(*t)]).collect(),
            zeta_norm: times.iter().map(|t| zeta(*t)).collect(),
        }
    }

    #[test]
    fn classification_cases() {
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.2).collect();
        let phase = obs(&times, |t| (-t).exp(), |t| 1.0 - (-2.0 * t).exp());
        assert_eq!(classify_observables(&phase, 1e-3).unwrap().class, SyncClass::PhaseSync);
        let freq = obs(&times, |t| 0.8 + (-t).exp(), |_| 0.9);
        assert_eq!(classify_observables(&freq, 1e-3).unwrap().class, SyncClass::FrequencySync);
        let periodic = obs(&times, |t| 1.0 + 0.5 * t.sin(), |t| 0.7 + 0.2 * t.cos());
        assert_eq!(classify_observables(&periodic, 1e-3).unwrap().class, SyncClass::None);
        assert!(classify_observables(&obs(&times[..49], |_| 0.0, |_| 1.0), 1e-3).is_err());
    }

    #[test]
    fn energy_bound() {
        let report = |total: f64, relative: f64| EnergyReport {
            total,
            per_osc: vec![],
            pair: vec![],
            relative,
            zeta_energy: total - relative,
            diff_energy_two: None,
        };
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let flat: Vec<EnergyReport> = times.iter().map(|t| report(2.0, (-t).exp())).collect();
        let b = energy_bound_check(&times, &flat, 1e-12).unwrap();
        assert_eq!(b.c_measured, 1.0);
        assert!(b.bounded);
        assert!((b.relative_decay.unwrap().rate - 1.0).abs() < 1e-9);
        let zero: Vec<EnergyReport> = times.iter().map(|_| report(0.0, 0.0)).collect();
        assert!(energy_bound_check(&times, &zero, 1e-12).is_err());
    }
}
