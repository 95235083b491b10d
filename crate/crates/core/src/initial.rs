//! Initial data: Gaussians, plane-wave mixtures, pairs with a prescribed
//! overlap, and seeded random ensembles and Gram matrices.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::correlation::CorrelationState;
use crate::error::{LoheError, Result};
use crate::grid::{inner_product, GridSpec, WaveField};
use crate::model::{order_parameter, EnsembleState};

/// `exp(−|x−c|²/(2σ²))·e^{i(p·x + θ)}`, normalized on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub center: Vec<f64>,
    pub width: f64,
    pub phase: f64,
    pub momentum: Vec<f64>,
}

impl GaussianSpec {
    pub fn centered_at(center: f64, width: f64) -> Self {
        Self { center: vec![center], width, phase: 0.0, momentum: vec![0.0] }
    }
}

pub fn gaussian(grid: &GridSpec, spec: &GaussianSpec) -> Result<WaveField> {
    if spec.center.len() != grid.dim() || spec.momentum.len() != grid.dim() {
        return Err(LoheError::Config(format!(
            "gaussian center/momentum must have {} components",
            grid.dim()
        )));
    }
    if !(spec.width > 0.0) {
        return Err(LoheError::Config(format!("gaussian width {} must be > 0", spec.width)));
    }
    let l = grid.length();
    let s2 = spec.width * spec.width;
    WaveField::from_fn(*grid, |x| {
        let mut r2 = 0.0;
        let mut phase = spec.phase;
        for axis in 0..x.len() {
            // nearest periodic image of the center
            let mut d = x[axis] - spec.center[axis];
            d -= l * (d / l).round();
            r2 += d * d;
            phase += spec.momentum[axis] * x[axis];
        }
        Complex64::from_polar((-r2 / (2.0 * s2)).exp(), phase)
    })
    .normalized()
}

/// Normalized superposition of grid-resolved plane waves
/// `Σ cₘ e^{2πi m·x/L}`.
pub fn plane_wave_mixture(grid: &GridSpec, modes: &[(Vec<i64>, Complex64)]) -> Result<WaveField> {
    if modes.is_empty() {
        return Err(LoheError::Config("plane-wave mixture needs at least one mode".into()));
    }
    let half = grid.points_per_axis() as i64 / 2;
    for (m, _) in modes {
        if m.len() != grid.dim() || m.iter().any(|v| v.abs() >= half) {
            return Err(LoheError::Config(format!("mode {m:?} is not resolved on the grid")));
        }
    }
    let l = grid.length();
    WaveField::from_fn(*grid, |x| {
        modes
            .iter()
            .map(|(m, c)| {
                let arg: f64 = m.iter().zip(x).map(|(mi, xi)| 2.0 * PI * *mi as f64 * xi / l).sum();
                c * Complex64::from_polar(1.0, arg)
            })
            .sum()
    })
    .normalized()
}

/// A partner for `base` with `⟨base, partner⟩ = z` exactly (to rounding):
/// `partner = z·base + √(1−|z|²)·χ`, `χ` the unit part of `helper`
/// orthogonal to `base`.
pub fn partner_with_overlap(base: &WaveField, helper: &WaveField, z: Complex64) -> Result<WaveField> {
    let r = z.norm();
    if r > 1.0 + 1e-12 {
        return Err(LoheError::Config(format!("|z| = {r} exceeds 1")));
    }
    let c = inner_product(base, helper)?;
    let values: Vec<Complex64> =
        helper.values().iter().zip(base.values()).map(|(h, b)| h - c * b).collect();
    let chi = WaveField::new(*base.grid(), values)?;
    if chi.norm() < 1e-8 * helper.norm() {
        return Err(LoheError::Config("helper field is parallel to the base field".into()));
    }
    let chi = chi.normalized()?;
    let tail = (1.0 - r * r).max(0.0).sqrt();
    let values = base
        .values()
        .iter()
        .zip(chi.values())
        .map(|(b, x)| z * b + tail * x)
        .collect();
    WaveField::new(*base.grid(), values)
}

/// Options for seeded random Gaussian ensembles.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEnsembleSpec {
    pub n: usize,
    /// Centers are drawn uniformly within this distance of the box centre.
    pub center_spread: f64,
    pub width_range: (f64, f64),
    pub max_momentum: f64,
    /// Phases are drawn from `[−phase_spread, phase_spread]`.
    pub phase_spread: f64,
    /// Redraw until every `Re⟨ζ, ψⱼ⟩ > 0`.
    pub require_positive_overlaps: bool,
}

impl RandomEnsembleSpec {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            center_spread: 2.0,
            width_range: (0.8, 1.6),
            max_momentum: 0.5,
            phase_spread: PI,
            require_positive_overlaps: false,
        }
    }
}

pub fn random_ensemble(grid: &GridSpec, spec: &RandomEnsembleSpec, seed: u64) -> Result<EnsembleState> {
    if spec.n == 0 {
        return Err(LoheError::Config("random ensemble needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mid = grid.length() / 2.0;
    for _attempt in 0..1000 {
        let mut fields = Vec::with_capacity(spec.n);
        for _ in 0..spec.n {
            let g = GaussianSpec {
                center: (0..grid.dim())
                    .map(|_| mid + rng.gen_range(-1.0..=1.0) * spec.center_spread)
                    .collect(),
                width: rng.gen_range(spec.width_range.0..=spec.width_range.1),
                phase: rng.gen_range(-1.0..=1.0) * spec.phase_spread,
                momentum: (0..grid.dim())
                    .map(|_| rng.gen_range(-1.0..=1.0) * spec.max_momentum)
                    .collect(),
            };
            fields.push(gaussian(grid, &g)?);
        }
        let state = EnsembleState::new(0.0, fields)?;
        if !spec.require_positive_overlaps || order_parameter(&state).overlaps.iter().all(|c| c.re > 0.0) {
            return Ok(state);
        }
    }
    Err(LoheError::Config("could not draw an ensemble with positive overlaps".into()))
}

/// Gram matrix of `n` seeded random unit vectors in `ℂ^ambient`; always a
/// valid correlation matrix.
pub fn random_gram(n: usize, ambient: usize, seed: u64) -> Result<CorrelationState> {
    if n < 2 || ambient == 0 {
        return Err(LoheError::Config("random Gram matrix needs n >= 2, ambient >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<Vec<Complex64>> = (0..n)
        .map(|_| {
            let v: Vec<Complex64> = (0..ambient)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            v.into_iter().map(|c| c / norm).collect()
        })
        .collect();
    let mut z = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        z[j * n + j] = Complex64::new(1.0, 0.0);
        for k in (j + 1)..n {
            let v: Complex64 = vectors[j].iter().zip(&vectors[k]).map(|(a, b)| a.conj() * b).sum();
            z[j * n + k] = v;
            z[k * n + j] = v.conj();
        }
    }
    CorrelationState::new(0.0, n, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussians_are_normalized() {
        let g = GridSpec::line(256, 40.0).unwrap();
        let f = gaussian(&g, &GaussianSpec::centered_at(20.0, 1.0)).unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-14);
        assert!(gaussian(&g, &GaussianSpec::centered_at(20.0, 0.0)).is_err());
    }

    #[test]
    fn prescribed_overlap_is_reproduced() {
        let g = GridSpec::line(256, 40.0).unwrap();
        let a = gaussian(&g, &GaussianSpec::centered_at(20.0, 1.0)).unwrap();
        let h = gaussian(&g, &GaussianSpec::centered_at(21.5, 1.2)).unwrap();
        for z in [Complex64::new(0.3, -0.2), Complex64::new(-0.661, 0.75), Complex64::new(0.0, 1.0)] {
            let b = partner_with_overlap(&a, &h, z).unwrap();
            assert!((inner_product(&a, &b).unwrap() - z).norm() < 1e-14);
            assert!((b.norm() - 1.0).abs() < 1e-14);
        }
        assert!(partner_with_overlap(&a, &a, Complex64::new(0.5, 0.0)).is_err());
    }

    #[test]
    fn random_ensembles_are_reproducible() {
        let g = GridSpec::line(128, 30.0).unwrap();
        let mut spec = RandomEnsembleSpec::new(5);
        spec.require_positive_overlaps = true;
        let a = random_ensemble(&g, &spec, 42).unwrap();
        let b = random_ensemble(&g, &spec, 42).unwrap();
        assert_eq!(a, b);
        assert!(order_parameter(&a).overlaps.iter().all(|c| c.re > 0.0));
        let gram = random_gram(4, 3, 1).unwrap();
        assert!(gram.is_positive_semidefinite(1e-12));
    }
}
