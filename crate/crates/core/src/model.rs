//! Model parameters, ensembles and the Schrödinger-Lohe right-hand side.
//!
//! The evolution equation for oscillator `j` is
//!
//! ```text
//! ∂ₜψⱼ = (i/2)Δψⱼ − i(V + Ωⱼ)ψⱼ + (K/2)(ζ − ⟨ζ, ψⱼ⟩ψⱼ),   ζ = (1/N)Σψₗ,
//! ```
//!
//! which equals the pairwise form with weights `K/(2N)` for unit-norm fields.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{LoheError, Result};
use crate::grid::{dot, GridSpec, SpectralGrid, WaveField};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Coupling strength and natural frequencies; everything the correlation
/// ODEs need.
#[derive(Debug, Clone, PartialEq)]
pub struct LoheParams {
    coupling: f64,
    frequencies: Vec<f64>,
    centering_shift: f64,
}

impl LoheParams {
    /// `K ≥ 0` (zero switches the coupling off) and at least two oscillators.
    pub fn new(coupling: f64, frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.len() < 2 {
            return Err(LoheError::Config(format!(
                "need at least 2 oscillators, got {}",
                frequencies.len()
            )));
        }
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(LoheError::Config(format!("coupling K = {coupling} must be >= 0")));
        }
        if let Some(w) = frequencies.iter().find(|w| !w.is_finite()) {
            return Err(LoheError::Config(format!("non-finite frequency {w}")));
        }
        Ok(Self { coupling, frequencies, centering_shift: 0.0 })
    }

    /// Identical oscillators: all `Ωⱼ = 0`.
    pub fn identical(coupling: f64, n: usize) -> Result<Self> {
        Self::new(coupling, vec![0.0; n])
    }

    /// The two-oscillator setting `Ω₁ = −Ω₂ = Ω`.
    pub fn two(coupling: f64, omega: f64) -> Result<Self> {
        Self::new(coupling, vec![omega, -omega])
    }

    pub fn n(&self) -> usize {
        self.frequencies.len()
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Total frequency shift removed by [`LoheParams::centered`] so far.
    pub fn centering_shift(&self) -> f64 {
        self.centering_shift
    }

    pub fn mean_frequency(&self) -> f64 {
        self.frequencies.iter().sum::<f64>() / self.n() as f64
    }

    pub fn is_centered(&self) -> bool {
        self.frequencies.iter().sum::<f64>().abs() <= 1e-12
    }

    pub fn is_identical(&self) -> bool {
        self.frequencies.iter().all(|&w| w == 0.0)
    }

    pub fn max_abs_frequency(&self) -> f64 {
        self.frequencies.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    /// `Λ = 2Ω/K`, defined only for two oscillators with `Ω₁ = −Ω₂`.
    pub fn lambda(&self) -> Option<f64> {
        match self.frequencies.as_slice() {
            [a, b] if (a + b).abs() <= 1e-12 && self.coupling > 0.0 => {
                Some(2.0 * a.abs() / self.coupling)
            }
            _ => None,
        }
    }

    /// Subtract the mean frequency. Pairwise differences are untouched.
    pub fn centered(&self) -> Self {
        let alpha = self.mean_frequency();
        let mut frequencies: Vec<f64> = self.frequencies.iter().map(|w| w - alpha).collect();
        // remove the rounding residue so the sum is zero to the last bit where possible
        let residue = frequencies.iter().sum::<f64>() / frequencies.len() as f64;
        if residue != 0.0 {
            frequencies.iter_mut().for_each(|w| *w -= residue);
        }
        Self {
            coupling: self.coupling,
            frequencies,
            centering_shift: self.centering_shift + alpha,
        }
    }
}

/// Built-in external potentials.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Zero,
    /// `A(1 + cos(2πx/L))` summed over axes: nonnegative, minimum at the box centre.
    CosineWell { amplitude: f64 },
    /// Smooth periodic bump `h·exp(−(d/w)²)` around the box corner, `d` the
    /// periodic distance to the origin.
    Barrier { height: f64, width: f64 },
    Sampled(Vec<f64>),
}

impl Potential {
    pub fn sample(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        let l = grid.length();
        let values = match self {
            Potential::Zero => vec![0.0; grid.total_points()],
            Potential::CosineWell { amplitude } => grid.sample(|x| {
                x.iter().map(|xa| amplitude * (1.0 + (2.0 * PI * xa / l).cos())).sum()
            }),
            Potential::Barrier { height, width } => {
                if !(*width > 0.0) {
                    return Err(LoheError::Config(format!("barrier width {width} must be > 0")));
                }
                grid.sample(|x| {
                    let d2: f64 = x
                        .iter()
                        .map(|xa| {
                            let d = xa.min(l - xa);
                            d * d
                        })
                        .sum();
                    height * (-d2 / (width * width)).exp()
                })
            }
            Potential::Sampled(v) => {
                if v.len() != grid.total_points() {
                    return Err(LoheError::GridMismatch(format!(
                        "potential has {} samples, grid has {}",
                        v.len(),
                        grid.total_points()
                    )));
                }
                v.clone()
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LoheError::Config("potential must be finite on the grid".into()));
        }
        Ok(values)
    }
}

/// Full model: parameters, grid and the sampled potential.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    params: LoheParams,
    grid: GridSpec,
    potential: Vec<f64>,
}

impl ModelConfig {
    pub fn new(params: LoheParams, grid: GridSpec, potential: &Potential) -> Result<Self> {
        let potential = potential.sample(&grid)?;
        Ok(Self { params, grid, potential })
    }

    pub fn params(&self) -> &LoheParams {
        &self.params
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn n_oscillators(&self) -> usize {
        self.params.n()
    }

    pub fn coupling(&self) -> f64 {
        self.params.coupling
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.params.frequencies
    }

    pub fn lambda(&self) -> Option<f64> {
        self.params.lambda()
    }

    pub fn centering_shift(&self) -> f64 {
        self.params.centering_shift
    }

    pub fn max_abs_potential(&self) -> f64 {
        self.potential.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn with_params(&self, params: LoheParams) -> Self {
        Self { params, grid: self.grid, potential: self.potential.clone() }
    }
}

/// Shift the frequencies to zero mean (the gauge `ψⱼ → e^{iαt}ψⱼ`).
pub fn center_frequencies(config: &ModelConfig) -> ModelConfig {
    config.with_params(config.params.centered())
}

/// The tuple `(ψ₁, …, ψ_N)` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub time: f64,
    fields: Vec<WaveField>,
}

impl EnsembleState {
    pub fn new(time: f64, fields: Vec<WaveField>) -> Result<Self> {
        let Some(first) = fields.first() else {
            return Err(LoheError::Config("empty ensemble".into()));
        };
        let grid = *first.grid();
        if let Some(bad) = fields.iter().position(|f| *f.grid() != grid) {
            return Err(LoheError::GridMismatch(format!("field {bad} lives on a different grid")));
        }
        Ok(Self { time, fields })
    }

    pub fn fields(&self) -> &[WaveField] {
        &self.fields
    }

    pub fn into_fields(self) -> Vec<WaveField> {
        self.fields
    }

    pub fn n(&self) -> usize {
        self.fields.len()
    }

    pub fn grid(&self) -> &GridSpec {
        self.fields[0].grid()
    }

    /// `‖ψⱼ‖ − 1` for every oscillator.
    pub fn mass_drift(&self) -> Vec<f64> {
        self.fields.iter().map(|f| f.norm() - 1.0).collect()
    }

    pub fn max_mass_drift(&self) -> f64 {
        self.mass_drift().iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.fields.iter().all(WaveField::is_finite)
    }

    /// Gram matrix `zⱼₖ = ⟨ψⱼ, ψₖ⟩`, row-major.
    pub fn gram(&self) -> Vec<Complex64> {
        let n = self.n();
        let dv = self.grid().cell_volume();
        let mut z = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for k in j..n {
                let v = dot(self.fields[j].values(), self.fields[k].values(), dv);
                z[j * n + k] = v;
                z[k * n + j] = v.conj();
            }
        }
        z
    }

    pub(crate) fn check_against(&self, config: &ModelConfig) -> Result<()> {
        if self.n() != config.n_oscillators() {
            return Err(LoheError::Config(format!(
                "{} fields but {} oscillators configured",
                self.n(),
                config.n_oscillators()
            )));
        }
        if *self.grid() != config.grid {
            return Err(LoheError::GridMismatch(format!(
                "ensemble grid {:?} vs potential grid {:?}",
                self.grid(),
                config.grid
            )));
        }
        Ok(())
    }
}

/// `ζ`, `‖ζ‖` and the overlaps `⟨ζ, ψⱼ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderParameterState {
    pub zeta: WaveField,
    pub norm: f64,
    pub overlaps: Vec<Complex64>,
}

pub fn order_parameter(state: &EnsembleState) -> OrderParameterState {
    let grid = *state.grid();
    let values = mean_field(state.fields.iter().map(WaveField::values));
    let dv = grid.cell_volume();
    let overlaps = state.fields.iter().map(|f| dot(&values, f.values(), dv)).collect();
    let zeta = WaveField::new(grid, values).expect("mean field shares the grid");
    OrderParameterState { norm: zeta.norm(), zeta, overlaps }
}

pub(crate) fn mean_field<'a>(fields: impl ExactSizeIterator<Item = &'a [Complex64]>) -> Vec<Complex64> {
    let n = fields.len() as f64;
    let mut acc: Vec<Complex64> = Vec::new();
    for f in fields {
        if acc.is_empty() {
            acc = f.to_vec();
        } else {
            acc.iter_mut().zip(f).for_each(|(a, b)| *a += b);
        }
    }
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Potential + frequency + coupling part of the right-hand side, written into
/// `out`. This is the sub-flow integrated by RK4 in the split scheme.
pub(crate) fn local_rhs(
    fields: &[Vec<Complex64>],
    params: &LoheParams,
    potential: &[f64],
    dv: f64,
    out: &mut [Vec<Complex64>],
) {
    let half_k = 0.5 * params.coupling;
    let zeta = mean_field(fields.iter().map(Vec::as_slice));
    for ((psi, omega), o) in fields.iter().zip(&params.frequencies).zip(out.iter_mut()) {
        let overlap = dot(&zeta, psi, dv);
        for (((o, p), z), v) in o.iter_mut().zip(psi).zip(&zeta).zip(potential) {
            *o = -I * (v + omega) * p + half_k * (z - overlap * p);
        }
    }
}

/// `∂ₜψⱼ` for every oscillator, order-parameter form.
pub fn lohe_rhs(state: &EnsembleState, config: &ModelConfig) -> Result<Vec<WaveField>> {
    state.check_against(config)?;
    let spectral = SpectralGrid::new(config.grid);
    Ok(lohe_rhs_with(&spectral, state, config))
}

pub fn lohe_rhs_with(
    spectral: &SpectralGrid,
    state: &EnsembleState,
    config: &ModelConfig,
) -> Vec<WaveField> {
    let grid = config.grid;
    let raw: Vec<Vec<Complex64>> = state.fields.iter().map(|f| f.values().to_vec()).collect();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); grid.total_points()]; raw.len()];
    local_rhs(&raw, &config.params, &config.potential, grid.cell_volume(), &mut out);
    for (psi, o) in raw.iter().zip(out.iter_mut()) {
        let lap = spectral.laplacian(psi);
        o.iter_mut().zip(&lap).for_each(|(o, l)| *o += 0.5 * I * l);
    }
    out.into_iter()
        .map(|v| WaveField::new(grid, v).expect("rhs shares the grid"))
        .collect()
}

/// `∂ₜψⱼ` from the pairwise sum `(K/2N)Σₗ(ψₗ − ⟨ψₗ, ψⱼ⟩ψⱼ)`.
pub fn lohe_rhs_pairwise(state: &EnsembleState, config: &ModelConfig) -> Result<Vec<WaveField>> {
    state.check_against(config)?;
    let spectral = SpectralGrid::new(config.grid);
    let grid = config.grid;
    let dv = grid.cell_volume();
    let n = state.n();
    let weight = config.coupling() / (2.0 * n as f64);
    let mut out = Vec::with_capacity(n);
    for (j, psi_j) in state.fields.iter().enumerate() {
        let lap = spectral.laplacian(psi_j.values());
        let omega = config.frequencies()[j];
        let mut rhs: Vec<Complex64> = psi_j
            .values()
            .iter()
            .zip(&lap)
            .zip(&config.potential)
            .map(|((p, l), v)| 0.5 * I * l - I * (v + omega) * p)
            .collect();
        for psi_l in &state.fields {
            let c = dot(psi_l.values(), psi_j.values(), dv);
            for ((r, pl), pj) in rhs.iter_mut().zip(psi_l.values()).zip(psi_j.values()) {
                *r += weight * (pl - c * pj);
            }
        }
        out.push(WaveField::new(grid, rhs)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::inner_product;
    use crate::initial::{gaussian, GaussianSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec {
        GridSpec::line(128, 30.0).unwrap()
    }

    fn random_ensemble(n: usize, seed: u64) -> EnsembleState {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fields = (0..n)
            .map(|_| {
                let spec = GaussianSpec {
                    center: vec![rng.gen_range(10.0..20.0)],
                    width: rng.gen_range(0.8..2.0),
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    momentum: vec![rng.gen_range(-1.0..1.0)],
                };
                gaussian(&g, &spec).unwrap()
            })
            .collect();
        EnsembleState::new(0.0, fields).unwrap()
    }

    #[test]
    fn centering_examples() {
        let p = LoheParams::new(1.0, vec![1.0, 1.0]).unwrap().centered();
        assert_eq!(p.frequencies(), &[0.0, 0.0]);
        assert_eq!(p.centering_shift(), 1.0);

        let p = LoheParams::new(1.0, vec![0.5, -0.5]).unwrap().centered();
        assert_eq!(p.frequencies(), &[0.5, -0.5]);
        assert_eq!(p.centering_shift(), 0.0);

        let p = LoheParams::new(1.0, vec![3.0, 1.0, 2.0]).unwrap().centered();
        assert_eq!(p.frequencies(), &[1.0, -1.0, 0.0]);
        assert_eq!(p.centering_shift(), 2.0);

        let p = LoheParams::new(1.0, vec![0.1, -0.3, 0.2]).unwrap().centered();
        assert!(p.centering_shift().abs() < 1e-16);
        assert!(p.frequencies().iter().sum::<f64>().abs() < 1e-15);
        for (a, b) in p.frequencies().iter().zip([0.1, -0.3, 0.2]) {
            assert!((a - b).abs() < 1e-16);
        }
    }

    #[test]
    fn lambda_only_for_symmetric_pairs() {
        assert_eq!(LoheParams::two(1.0, 0.375).unwrap().lambda(), Some(0.75));
        assert_eq!(LoheParams::new(1.0, vec![0.2, 0.1]).unwrap().lambda(), None);
        assert_eq!(LoheParams::identical(1.0, 3).unwrap().lambda(), None);
        assert!(LoheParams::new(1.0, vec![0.0]).is_err());
        assert!(LoheParams::new(-1.0, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn identical_fields_see_only_the_free_laplacian() {
        let g = grid();
        let psi = random_ensemble(1, 3).into_fields().remove(0);
        let state = EnsembleState::new(0.0, vec![psi.clone(); 4]).unwrap();
        let cfg = ModelConfig::new(LoheParams::identical(2.5, 4).unwrap(), g, &Potential::Zero)
            .unwrap();
        let rhs = lohe_rhs(&state, &cfg).unwrap();
        let lap = SpectralGrid::new(g).laplacian(psi.values());
        for r in &rhs {
            for (a, b) in r.values().iter().zip(&lap) {
                assert!((a - 0.5 * I * b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn pairwise_and_order_parameter_forms_agree() {
        let g = grid();
        // two normalized plane waves and a Gaussian mixture
        let l = g.length();
        let pw = |k: f64| {
            WaveField::from_fn(g, |x| Complex64::from_polar(1.0, 2.0 * PI * k * x[0] / l))
                .normalized()
                .unwrap()
        };
        let state = EnsembleState::new(0.0, vec![pw(1.0), pw(-2.0)]).unwrap();
        let cfg = ModelConfig::new(LoheParams::two(1.0, 0.3).unwrap(), g, &Potential::Zero).unwrap();
        let a = lohe_rhs(&state, &cfg).unwrap();
        let b = lohe_rhs_pairwise(&state, &cfg).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            for (x, y) in fa.values().iter().zip(fb.values()) {
                assert!((x - y).norm() < 1e-14);
            }
        }
        let state = random_ensemble(5, 11);
        let params = LoheParams::new(0.7, vec![0.3, -0.1, 0.2, -0.4, 0.0]).unwrap();
        let cfg = ModelConfig::new(params, g, &Potential::CosineWell { amplitude: 0.5 }).unwrap();
        let a = lohe_rhs(&state, &cfg).unwrap();
        let b = lohe_rhs_pairwise(&state, &cfg).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            for (x, y) in fa.values().iter().zip(fb.values()) {
                assert!((x - y).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn mass_flux_vanishes_after_centering() {
        let g = grid();
        let state = random_ensemble(3, 5);
        let params = LoheParams::new(1.3, vec![0.1, -0.3, 0.2]).unwrap();
        let cfg = center_frequencies(
            &ModelConfig::new(params, g, &Potential::Barrier { height: 2.0, width: 3.0 }).unwrap(),
        );
        assert!(cfg.params().is_centered());
        let rhs = lohe_rhs(&state, &cfg).unwrap();
        for (psi, r) in state.fields().iter().zip(&rhs) {
            let flux = inner_product(psi, r).unwrap().re;
            assert!(flux.abs() < 1e-12, "{flux}");
        }
    }

    #[test]
    fn order_parameter_examples() {
        let g = grid();
        let psi = random_ensemble(1, 9).into_fields().remove(0);
        let same = EnsembleState::new(0.0, vec![psi.clone(); 3]).unwrap();
        let op = order_parameter(&same);
        assert!((op.norm - 1.0).abs() < 1e-14);
        assert!(op.overlaps.iter().all(|c| (c - 1.0).norm() < 1e-14));

        // orthogonal pair: two distinct plane waves
        let l = g.length();
        let pw = |k: f64| {
            WaveField::from_fn(g, |x| Complex64::from_polar(1.0, 2.0 * PI * k * x[0] / l))
                .normalized()
                .unwrap()
        };
        let pair = EnsembleState::new(0.0, vec![pw(1.0), pw(3.0)]).unwrap();
        let op = order_parameter(&pair);
        assert!((op.norm * op.norm - 0.5).abs() < 1e-14);

        let minus = psi.scaled(Complex64::new(-1.0, 0.0));
        let split = EnsembleState::new(0.0, vec![psi.clone(), psi.clone(), psi.clone(), minus]).unwrap();
        assert!((order_parameter(&split).norm - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rhs_rejects_mismatched_configs() {
        let state = random_ensemble(3, 1);
        let cfg = ModelConfig::new(LoheParams::identical(1.0, 2).unwrap(), grid(), &Potential::Zero)
            .unwrap();
        assert!(lohe_rhs(&state, &cfg).is_err());
        let other = GridSpec::line(64, 30.0).unwrap();
        let cfg = ModelConfig::new(LoheParams::identical(1.0, 3).unwrap(), other, &Potential::Zero)
            .unwrap();
        assert!(matches!(lohe_rhs(&state, &cfg), Err(LoheError::GridMismatch(_))));
        assert!(Potential::Sampled(vec![0.0; 3]).sample(&grid()).is_err());
    }
}
