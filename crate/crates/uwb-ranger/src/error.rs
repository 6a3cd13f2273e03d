//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Frequency grid is missing points, unordered or non-uniform.
    #[error("invalid frequency grid: {0}")]
    Grid(String),

    /// Malformed or insufficient input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// No PDP bin exceeds the threshold; the measurement is unusable.
    #[error("no PDP bin above threshold {0} dBm")]
    EmptyPdp(f64),

    /// A feature has zero variance across the training set and cannot be
    /// standardized.
    #[error("feature `{0}` has zero variance across the training set")]
    DegenerateFeature(String),

    /// Vector or matrix dimensions do not match.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },

    /// Symmetric eigendecomposition did not converge.
    #[error("eigendecomposition failed: {0}")]
    Eig(String),

    /// Numerical failure (e.g. Cholesky breakdown after jitter escalation).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Model fitting failed.
    #[error("fit failed: {0}")]
    Fit(String),

    /// More components requested than the numerical rank supports.
    #[error("requested {requested} components but numerical rank is {rank}")]
    Rank { requested: usize, rank: usize },

    /// No usable component left for range estimation.
    #[error("estimation failed: {0}")]
    Estimate(String),

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Train/test split cannot satisfy the stratification constraints.
    #[error("split error: {0}")]
    Split(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration/input problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Grid(_)
            | Error::Input(_)
            | Error::EmptyPdp(_)
            | Error::DegenerateFeature(_)
            | Error::Dim { .. }
            | Error::Config(_)
            | Error::Split(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::Eig(_)
            | Error::Numerical(_)
            | Error::Fit(_)
            | Error::Rank { .. }
            | Error::Estimate(_) => 3,
        }
    }
}
