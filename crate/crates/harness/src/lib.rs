//! Batch front end: scenario files in, artifact directories out.
//!
//! Every command is a pure function from a [`Scenario`] to an
//! [`Artifacts`] set, so outputs can be compared byte for byte before
//! anything touches the disk.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod scenario;
pub mod sweep;
pub mod verify;

use std::path::{Path, PathBuf};

pub use artifacts::Artifacts;
pub use commands::CommandOutput;
pub use error::{HarnessError, Result};
pub use scenario::{Overrides, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    Ode,
    Oracle,
    Verify,
    Sweep,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Ode => "ode",
            CommandKind::Oracle => "oracle",
            CommandKind::Verify => "verify",
            CommandKind::Sweep => "sweep",
        }
    }
}

pub fn execute(kind: CommandKind, scenario: &Scenario) -> Result<CommandOutput> {
    match kind {
        CommandKind::Simulate => commands::simulate(scenario),
        CommandKind::Ode => commands::ode(scenario),
        CommandKind::Oracle => commands::oracle(scenario),
        CommandKind::Verify => verify::verify(scenario),
        CommandKind::Sweep => sweep::sweep(scenario),
    }
}

/// Load, override, run and write. Returns the run directory; a failure that
/// still produced artifacts is returned alongside it.
pub fn run_to_disk(
    kind: CommandKind,
    scenario_path: &Path,
    overrides: &Overrides,
    out_root: Option<&Path>,
) -> std::result::Result<PathBuf, (Option<PathBuf>, HarnessError)> {
    let mut scenario = Scenario::from_file(scenario_path).map_err(|e| (None, e))?;
    scenario.apply(overrides, kind == CommandKind::Ode).map_err(|e| (None, e))?;
    let output = execute(kind, &scenario).map_err(|e| (None, e))?;
    let root = artifacts::output_root(out_root);
    let dir = artifacts::create_run_dir(&root, &scenario.name).map_err(|e| (None, e))?;
    output.artifacts.write_to(&dir).map_err(|e| (Some(dir.clone()), e))?;
    match output.failure {
        None => Ok(dir),
        Some(e) => Err((Some(dir), e)),
    }
}
