//! Periodic grids, sampled wavefunctions and the FFT machinery shared by the
//! solver and the diagnostics.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{LoheError, Result};

/// Uniform periodic box `[0, L)^dim` with `points_per_axis` samples per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    points_per_axis: usize,
    length: f64,
}

impl GridSpec {
    pub const MIN_POINTS: usize = 16;

    pub fn new(dim: usize, points_per_axis: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(LoheError::Config(format!("grid dimension {dim} not in 1..=3")));
        }
        if points_per_axis < Self::MIN_POINTS || !points_per_axis.is_power_of_two() {
            return Err(LoheError::Config(format!(
                "points_per_axis = {points_per_axis} must be a power of two >= {}",
                Self::MIN_POINTS
            )));
        }
        if points_per_axis.checked_pow(dim as u32).is_none_or(|n| n > (1 << 26)) {
            return Err(LoheError::Config(format!(
                "grid {points_per_axis}^{dim} is too large"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(LoheError::Config(format!("box length {length} must be positive")));
        }
        Ok(Self { dim, points_per_axis, length })
    }

    /// One-dimensional grid shorthand.
    pub fn line(points: usize, length: f64) -> Result<Self> {
        Self::new(1, points, length)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Largest resolved angular wavenumber along one axis (the Nyquist mode).
    pub fn max_wavenumber(&self) -> f64 {
        PI / self.spacing()
    }

    /// Coordinates of the flat (row-major, last axis fastest) index.
    pub fn coords(&self, index: usize) -> Vec<f64> {
        let n = self.points_per_axis;
        let h = self.spacing();
        let mut out = vec![0.0; self.dim];
        let mut rem = index;
        for axis in (0..self.dim).rev() {
            out[axis] = (rem % n) as f64 * h;
            rem /= n;
        }
        out
    }

    /// Sample a function of position on every grid point.
    pub fn sample<T>(&self, mut f: impl FnMut(&[f64]) -> T) -> Vec<T> {
        (0..self.total_points()).map(|i| f(&self.coords(i))).collect()
    }

    /// Angular wavenumbers along one axis in FFT order.
    pub fn axis_wavenumbers(&self) -> Vec<f64> {
        let n = self.points_per_axis as i64;
        let base = 2.0 * PI / self.length;
        (0..n)
            .map(|m| if m < n / 2 { m } else { m - n })
            .map(|m| base * m as f64)
            .collect()
    }
}

/// One complex wavefunction sampled on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl WaveField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(LoheError::GridMismatch(format!(
                "{} samples for a grid of {} points",
                values.len(),
                grid.total_points()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.total_points()] }
    }

    pub fn from_fn(grid: GridSpec, f: impl FnMut(&[f64]) -> Complex64) -> Self {
        Self { values: grid.sample(f), grid }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.values, self.grid.cell_volume())
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Rescale to unit discrete L² norm. Fails on the zero field.
    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(LoheError::Config("cannot normalize a zero or non-finite field".into()));
        }
        let inv = 1.0 / n;
        self.values.iter_mut().for_each(|v| *v *= inv);
        Ok(self)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// `⟨a, b⟩ = ∫ ā b dx` by the rectangle rule on the periodic grid.
pub fn inner_product(a: &WaveField, b: &WaveField) -> Result<Complex64> {
    if a.grid != b.grid {
        return Err(LoheError::GridMismatch(format!("{:?} vs {:?}", a.grid, b.grid)));
    }
    Ok(dot(&a.values, &b.values, a.grid.cell_volume()))
}

/// Conjugate-linear-in-the-first-slot quadrature on raw sample slices.
pub(crate) fn dot(a: &[Complex64], b: &[Complex64], cell_volume: f64) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc * cell_volume
}

pub(crate) fn norm_sq(a: &[Complex64], cell_volume: f64) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell_volume
}

/// FFT plans and wavenumber tables for one grid.
///
/// Forward transforms are unnormalized; [`SpectralGrid::inverse`] divides by
/// the point count.
#[derive(Clone)]
pub struct SpectralGrid {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    backward: Arc<dyn Fft<f64>>,
    axis_k: Vec<f64>,
    k_squared: Vec<f64>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("grid", &self.grid).finish()
    }
}

impl SpectralGrid {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_axis();
        let forward = planner.plan_fft_forward(n);
        let backward = planner.plan_fft_inverse(n);
        let axis_k = grid.axis_wavenumbers();
        let k_squared = (0..grid.total_points())
            .map(|i| mode_indices(&grid, i).iter().map(|&m| axis_k[m] * axis_k[m]).sum())
            .collect();
        Self { grid, forward, backward, axis_k, k_squared }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `|k|²` per Fourier mode, flat in FFT order.
    pub fn k_squared(&self) -> &[f64] {
        &self.k_squared
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.backward);
        let scale = 1.0 / self.grid.total_points() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points_per_axis();
        let dim = self.grid.dim();
        assert_eq!(data.len(), self.grid.total_points(), "field/grid size mismatch");
        if dim == 1 {
            plan.process(data);
            return;
        }
        let total = data.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            for start in 0..total {
                // visit each line once: the axis digit of `start` must be zero
                if !(start / stride).is_multiple_of(n) {
                    continue;
                }
                for (m, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + m * stride];
                }
                plan.process(&mut line);
                for (m, v) in line.iter().enumerate() {
                    data[start + m * stride] = *v;
                }
            }
        }
    }

    /// Multiply in Fourier space by a per-mode factor.
    pub fn apply_fourier_multiplier(&self, data: &mut [Complex64], factor: &[Complex64]) {
        self.forward(data);
        data.iter_mut().zip(factor).for_each(|(v, f)| *v *= f);
        self.inverse(data);
    }

    /// Spectral Laplacian.
    pub fn laplacian(&self, field: &[Complex64]) -> Vec<Complex64> {
        let mut buf = field.to_vec();
        self.forward(&mut buf);
        buf.iter_mut().zip(&self.k_squared).for_each(|(v, k2)| *v *= -k2);
        self.inverse(&mut buf);
        buf
    }

    /// Spectral gradient, one component per axis. The Nyquist mode is dropped
    /// from first derivatives.
    pub fn gradient(&self, field: &[Complex64]) -> Vec<Vec<Complex64>> {
        let mut hat = field.to_vec();
        self.forward(&mut hat);
        let nyquist = self.grid.points_per_axis() / 2;
        (0..self.grid.dim())
            .map(|axis| {
                let mut comp: Vec<Complex64> = hat
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let m = mode_indices(&self.grid, i)[axis];
                        if m == nyquist {
                            Complex64::new(0.0, 0.0)
                        } else {
                            v * Complex64::new(0.0, self.axis_k[m])
                        }
                    })
                    .collect();
                self.inverse(&mut comp);
                comp
            })
            .collect()
    }

    /// Fourier multiplier of the free flow `∂ₜψ = (i/2)Δψ` over time `tau`.
    pub fn free_propagator(&self, tau: f64) -> Vec<Complex64> {
        self.k_squared
            .iter()
            .map(|k2| Complex64::from_polar(1.0, -0.5 * k2 * tau))
            .collect()
    }
}

fn mode_indices(grid: &GridSpec, index: usize) -> Vec<usize> {
    let n = grid.points_per_axis();
    let mut out = vec![0; grid.dim()];
    let mut rem = index;
    for axis in (0..grid.dim()).rev() {
        out[axis] = rem % n;
        rem /= n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(0, 64, 1.0).is_err());
        assert!(GridSpec::new(4, 64, 1.0).is_err());
        assert!(GridSpec::new(1, 8, 1.0).is_err());
        assert!(GridSpec::new(1, 100, 1.0).is_err());
        assert!(GridSpec::new(1, 64, 0.0).is_err());
        assert!(GridSpec::new(1, 64, f64::NAN).is_err());
        let g = GridSpec::new(2, 16, 2.0).unwrap();
        assert_eq!(g.total_points(), 256);
        assert!((g.cell_volume() - (2.0f64 / 16.0).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn plane_waves_are_orthogonal() {
        let g = GridSpec::line(64, 10.0).unwrap();
        let wave = |k: i32| {
            WaveField::from_fn(g, |x| Complex64::from_polar(1.0, 2.0 * PI * k as f64 * x[0] / 10.0))
        };
        for k1 in -3..=3 {
            for k2 in -3..=3 {
                let ip = inner_product(&wave(k1), &wave(k2)).unwrap() / 10.0;
                let expect = if k1 == k2 { 1.0 } else { 0.0 };
                assert!((ip - c(expect, 0.0)).norm() < 1e-13, "{k1} {k2} {ip}");
            }
        }
    }

    #[test]
    fn inner_product_rejects_mismatched_grids() {
        let a = WaveField::zeros(GridSpec::line(16, 1.0).unwrap());
        let b = WaveField::zeros(GridSpec::line(32, 1.0).unwrap());
        assert!(matches!(inner_product(&a, &b), Err(LoheError::GridMismatch(_))));
        assert!(WaveField::new(*a.grid(), vec![c(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn gaussian_overlap_matches_closed_form() {
        // ψ ∝ exp(-(x-c)²/(2σ²)) e^{ikx}; with equal momenta the plane-wave
        // phases cancel and the overlap is exp(-x0²/(4σ²)).
        let l = 60.0;
        let g = GridSpec::line(512, l).unwrap();
        let sigma = 1.3;
        let k = 0.7;
        let x0 = 1.9;
        let gauss = |center: f64| {
            WaveField::from_fn(g, |x| {
                let d = x[0] - center;
                let amp = (PI * sigma * sigma).powf(-0.25) * (-d * d / (2.0 * sigma * sigma)).exp();
                Complex64::from_polar(amp, k * x[0])
            })
        };
        let a = gauss(30.0);
        let b = gauss(30.0 + x0);
        let ip = inner_product(&a, &b).unwrap();
        let expect = (-x0 * x0 / (4.0 * sigma * sigma)).exp();
        assert!((ip - c(expect, 0.0)).norm() < 1e-10, "{ip} vs {expect}");
    }

    #[test]
    fn laplacian_of_resolved_mode_is_exact() {
        let l = 7.0;
        let g = GridSpec::line(32, l).unwrap();
        let sg = SpectralGrid::new(g);
        let k = 2.0 * PI * 3.0 / l;
        let f = WaveField::from_fn(g, |x| Complex64::from_polar(1.0, k * x[0]));
        let lap = sg.laplacian(f.values());
        for (a, b) in lap.iter().zip(f.values()) {
            assert!((a + b * k * k).norm() < 1e-11);
        }
        let grad = sg.gradient(f.values());
        for (a, b) in grad[0].iter().zip(f.values()) {
            assert!((a - b * c(0.0, k)).norm() < 1e-12);
        }
    }

    #[test]
    fn two_dimensional_transform_round_trips_and_differentiates() {
        let l = 5.0;
        let g = GridSpec::new(2, 16, l).unwrap();
        let sg = SpectralGrid::new(g);
        let (kx, ky) = (2.0 * PI * 2.0 / l, 2.0 * PI * -1.0 / l);
        let f = WaveField::from_fn(g, |x| Complex64::from_polar(1.0, kx * x[0] + ky * x[1]));
        let mut buf = f.values().to_vec();
        sg.forward(&mut buf);
        sg.inverse(&mut buf);
        for (a, b) in buf.iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-13);
        }
        let lap = sg.laplacian(f.values());
        for (a, b) in lap.iter().zip(f.values()) {
            assert!((a + b * (kx * kx + ky * ky)).norm() < 1e-11);
        }
        let grad = sg.gradient(f.values());
        for i in 0..f.values().len() {
            assert!((grad[0][i] - f.values()[i] * c(0.0, kx)).norm() < 1e-11);
            assert!((grad[1][i] - f.values()[i] * c(0.0, ky)).norm() < 1e-11);
        }
    }
}
