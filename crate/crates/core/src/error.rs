//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by data handling, model fitting, training, and the
/// experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// CSV parse failure. `row` and `col` are 1-based file coordinates
    /// (the header is row 1).
    #[error("csv error at row {row}, column {col}: {message}")]
    Csv {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("series too short: {0}")]
    TooShort(String),

    #[error("feature '{name}' (column {index}) is constant on the fit segment")]
    ConstantFeature { index: usize, name: String },

    #[error("phase {phase} of period {period} never occurs in the training segment")]
    UnobservedPhase { phase: usize, period: usize },

    #[error("split produced an empty {segment} segment")]
    EmptySegment { segment: &'static str },

    #[error("singular normal equations at lambda = 0; refit with lambda > 0")]
    SingularSystem,

    #[error("coefficient matrix is unstable: spectral radius estimate {rho:.6} >= 1")]
    Unstable { rho: f64 },

    #[error("simulation diverged at step {step}: |value| = {value:.3e} exceeds {limit:.1e}")]
    Diverged { step: usize, value: f64, limit: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("metric denominator is zero: {0}")]
    ZeroDenominator(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
