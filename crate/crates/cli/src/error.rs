use serde::Serialize;
use thiserror::Error;

use crate::config::ConfigError;

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const GOLDEN_MISMATCH: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
    pub const NON_CONVERGENCE: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Core(#[from] biphoton::Error),

    #[error("{path}: {message}")]
    Input { path: String, message: String },

    #[error("invalid arguments: {0}")]
    Usage(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("golden files differ: {0}")]
    GoldenMismatch(String),
}

impl CliError {
    pub fn input(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Input {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use biphoton::Error as E;
        match self {
            CliError::Config(_) | CliError::Input { .. } | CliError::Usage(_) | CliError::Io(_) => {
                exit::CONFIG
            }
            CliError::Core(E::Invariant { .. } | E::Physicality(_) | E::SingularCavity) => exit::CONFIG,
            CliError::Core(E::NonConvergence { .. }) => exit::NON_CONVERGENCE,
            CliError::Core(_) => exit::NUMERIC,
            CliError::GoldenMismatch(_) => exit::GOLDEN_MISMATCH,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        use biphoton::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Input { .. } => "input",
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::GoldenMismatch(_) => "golden_mismatch",
            CliError::Core(e) => match e {
                E::Domain(_) => "domain",
                E::Invariant { .. } => "invariant",
                E::NoPhaseMatching { .. } => "no_phase_matching",
                E::Resolution(_) => "resolution",
                E::Physicality(_) => "physicality",
                E::DegenerateInput(_) => "degenerate_input",
                E::SingularCavity => "singular_cavity",
                E::InsufficientData(_) => "insufficient_data",
                E::DegenerateFit(_) => "degenerate_fit",
                E::NonConvergence { .. } => "non_convergence",
            },
        }
    }

    pub fn report(&self, subcommand: &str) -> ErrorReport {
        ErrorReport {
            error: self.kind().to_string(),
            message: self.to_string(),
            subcommand: subcommand.to_string(),
        }
    }
}

/// Error record written to stderr as one JSON line.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct ErrorReport {
    pub error: String,
    pub message: String,
    pub subcommand: String,
}
