use std::path::PathBuf;

use lohe_core::LoheError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] LoheError),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    ChecksFailed(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// 1 check failure, 2 usage/config, 3 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::ChecksFailed(_) => 1,
            HarnessError::Core(LoheError::Divergence { .. }) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
