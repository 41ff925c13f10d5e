//! Scenario ingestion, command dispatch and result serialization for the
//! `hcarma` binary.
//!
//! Scenarios are single TOML documents whose field names follow the domain
//! vocabulary: `spaces`, `companion`, `noise`, `observation`, `run`. The
//! three commands are `simulate` (ensemble CSV + manifest), `analyze`
//! (stability / stationary / characteristic-functional report) and
//! `validate` (cross-method consistency checks).
//!
//! Exit codes are a stable contract: 0 success, 1 validation error,
//! 2 numerical failure.

pub mod commands;
pub mod output;
pub mod scenario;

/// Command-level error split along the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    /// Bad scenario, bad arguments, unreadable or unwritable files.
    Validation(String),
    /// The numerics refused or diverged.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "validation error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hilbert_carma::Error> for CliError {
    fn from(err: hilbert_carma::Error) -> Self {
        use hilbert_carma::Error as E;
        match &err {
            E::DimensionMismatch(_)
            | E::SpaceMismatch(_)
            | E::IndexOutOfRange { .. }
            | E::Assembly { .. }
            | E::InvalidArgument(_)
            | E::Unsupported(_) => CliError::Validation(err.to_string()),
            E::SingularOperator(_)
            | E::SeriesTruncation { .. }
            | E::SemigroupOverflow { .. }
            | E::Unstable { .. }
            | E::Numerical(_) => CliError::Numerical(err.to_string()),
        }
    }
}
