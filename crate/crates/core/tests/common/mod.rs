#![allow(dead_code)]

use lohe_core::initial::{gaussian, partner_with_overlap, GaussianSpec};
use lohe_core::model::{EnsembleState, LoheParams, ModelConfig, Potential};
use lohe_core::solver::{evolve, SolverParams, Trajectory};
use lohe_core::GridSpec;
use num_complex::Complex64;

pub fn line_grid() -> GridSpec {
    GridSpec::line(256, 40.0).unwrap()
}

/// Unit Gaussian at the box centre and a partner with `⟨ψ₁, ψ₂⟩ = z0`.
pub fn pair_with_overlap(grid: &GridSpec, z0: Complex64) -> EnsembleState {
    let mid = grid.length() / 2.0;
    let base = gaussian(grid, &GaussianSpec::centered_at(mid, 1.0)).unwrap();
    let helper = gaussian(
        grid,
        &GaussianSpec { momentum: vec![0.8], phase: 0.3, ..GaussianSpec::centered_at(mid + 1.5, 1.3) },
    )
    .unwrap();
    let partner = partner_with_overlap(&base, &helper, z0).unwrap();
    EnsembleState::new(0.0, vec![base, partner]).unwrap()
}

pub fn config(params: LoheParams, grid: GridSpec, potential: Potential) -> ModelConfig {
    ModelConfig::new(params, grid, &potential).unwrap()
}

pub fn run(
    initial: &EnsembleState,
    config: &ModelConfig,
    dt: f64,
    t_end: f64,
    stride: usize,
    diagnostics: bool,
) -> Trajectory {
    let params = SolverParams::new(dt, t_end).with_stride(stride).with_diagnostics(diagnostics);
    evolve(initial, config, &params).unwrap()
}

pub fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}
