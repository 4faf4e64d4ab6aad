use std::path::PathBuf;

use thiserror::Error;

/// A parameter set that violates the model's constraints.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("n must be at least 1")]
    EmptyPopulation,
    #[error("alpha must exceed 2 (got {0})")]
    AlphaTooSmall(f64),
    #[error("kappa must be positive (got {0})")]
    NonPositiveKappa(f64),
    #[error("tau must be at least 1")]
    ZeroTau,
    #[error("beta must lie in [0, 1] (got {0})")]
    BetaOutOfRange(f64),
    #[error("initial_infected must be at least 1")]
    NoInitialInfected,
    #[error("initial_infected ({infected}) exceeds n ({n})")]
    TooManyInfected { infected: usize, n: usize },
    #[error("kappa * n rounds to {0} cells; at least 1 is required")]
    NoCells(usize),
    #[error("attractiveness cutoff floor((kappa*n)^(1/alpha)) is {0}; it must be at least 2")]
    CutoffTooSmall(u32),
    #[error("max_attractiveness must be at least 2 (got {0})")]
    DegenerateSupport(u32),
    #[error("alpha must be positive and finite (got {0})")]
    InvalidExponent(f64),
    #[error("grid needs at least one cell")]
    EmptyGrid,
    #[error("cell {0} has zero weight")]
    ZeroWeight(usize),
    #[error("attractiveness {0} is below 2")]
    AttractivenessBelowTwo(u32),
}

/// A config file or command line problem. `line` is 1-based for file input
/// and 0 for values that came from the command line or defaults.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: usize, key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            line,
            key: key.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: ", self.line)?;
        }
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance too large to enumerate: {nodes} nodes on {cells} cells (limit 8 x 8)")]
    TooLarge { nodes: usize, cells: usize },
    #[error("sparse-contact regime violated: {0}")]
    RegimeViolated(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure: 2 for bad configuration or requests, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Param(_) | Error::Config(_) | Error::Oracle(_) => 2,
            Error::Io { .. } => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
