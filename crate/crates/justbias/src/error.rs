//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by the estimation core.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EstimError {
    #[error("empty design: {0}")]
    EmptyDesign(String),
    #[error("singular design: collinear columns {}", columns.join(", "))]
    SingularDesign { columns: Vec<String> },
    #[error("{n_instruments} instrument(s) for {n_endogenous} endogenous regressor(s)")]
    TooFewInstruments {
        n_instruments: usize,
        n_endogenous: usize,
    },
    #[error("cluster-robust covariance needs at least 2 clusters")]
    SingleCluster,
    #[error("column '{0}' has zero variance on the reference sample")]
    ZeroVariance(String),
    #[error("window of {width} months selects no rows")]
    EmptyWindow { width: u32 },
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
}

/// Top-level error. The CLI maps variants to exit codes:
/// config errors exit 1, data errors exit 2, estimation failures exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Estimation(#[from] EstimError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for this error per the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::Io { .. } => 2,
            Error::Estimation(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
