use std::io;
use std::path::PathBuf;

use pnpch_core::SchemeError;
use thiserror::Error;

use crate::config::ConfigError;

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const INVARIANT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("initial data are not electroneutral: mean(rho_f) + sum z mean(c) = {residual:.6e}")]
    NotNeutral { residual: f64 },
    #[error("unknown manufactured case `{0}` (expected 1d or 2d)")]
    UnknownCase(String),
    #[error("invalid levels: {0}")]
    Levels(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("observed orders fall outside [{lo}, {hi}]")]
    OrdersOutOfWindow { lo: f64, hi: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_)
            | CliError::NotNeutral { .. }
            | CliError::UnknownCase(_)
            | CliError::Levels(_)
            | CliError::Output { .. } => exit::CONFIG,
            CliError::Scheme(e) => match e {
                SchemeError::NotNeutral { .. }
                | SchemeError::InvalidConfig { .. }
                | SchemeError::ShapeMismatch(_)
                | SchemeError::Model(_)
                | SchemeError::Grid(_) => exit::CONFIG,
                SchemeError::InvariantViolation { .. } => exit::INVARIANT,
                _ => exit::SOLVER,
            },
            CliError::OrdersOutOfWindow { .. } => exit::INVARIANT,
        }
    }
}
