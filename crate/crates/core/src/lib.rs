//! Simulation and verification toolkit for the Schrödinger-Lohe model of
//! quantum synchronization.
//!
//! The PDE side evolves `N` wavefunctions on a periodic grid with a
//! Strang-split pseudospectral scheme ([`solver`]). The ODE side integrates
//! the exact finite-dimensional reductions for their correlations
//! ([`correlation`]). [`oracles`] and [`diagnostics`] supply the closed forms
//! and observables both are checked against.

pub mod correlation;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod initial;
pub mod model;
pub mod oracles;
pub mod snapshot;
pub mod solver;

pub use correlation::{CorrelationSeries, CorrelationState, IntegrateOptions, MacroCorrelation, OdeSystem};
pub use diagnostics::{DiagnosticsRecord, EnergyReport, SyncClass, SyncReport};
pub use error::{LoheError, Result};
pub use grid::{inner_product, GridSpec, SpectralGrid, WaveField};
pub use model::{center_frequencies, lohe_rhs, order_parameter, EnsembleState, LoheParams, ModelConfig, Potential};
pub use oracles::{classify_two, z_exact, Regime, TwoOscRegime};
pub use solver::{evolve, Scheme, SolverParams, Trajectory};
