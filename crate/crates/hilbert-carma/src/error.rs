//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("component index {index} out of range 1..={count}")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("companion assembly failed at block {block}: {reason}")]
    Assembly { block: String, reason: String },

    #[error("singular operator in {0}")]
    SingularOperator(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The truncated variation-of-constants series cannot reach the requested
    /// tolerance with the configured number of terms; carries the classical
    /// remainder bound `K e^{ct} (|B| t)^{n+1} / (n+1)!`.
    #[error(
        "series truncated after {terms} terms: remainder bound {bound:.3e} exceeds tolerance {tolerance:.3e} at t = {t}"
    )]
    SeriesTruncation {
        terms: usize,
        bound: f64,
        tolerance: f64,
        t: f64,
    },

    #[error("semigroup evaluation overflowed at t = {t}: growth bound |C| t = {growth_bound:.3e}")]
    SemigroupOverflow { t: f64, growth_bound: f64 },

    #[error("system is not exponentially stable: spectral abscissa {abscissa:.6e}")]
    Unstable { abscissa: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
