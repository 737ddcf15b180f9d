//! Error types shared by the library and the command-line front end.

use thiserror::Error;

/// Errors produced while validating inputs, building designs, or evaluating
/// estimators.
///
/// Each variant corresponds to one machine-readable failure class; the CLI
/// maps them onto distinct process exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range, or a combination of
    /// options is not meaningful (for example a shrinkage estimator applied
    /// to the fixed-sample plan).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// No design satisfies the requested budget (for example no stopping
    /// parameter keeps the expected number of tests within the target).
    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),

    /// The estimator is undefined or identically degenerate for the given
    /// design (for example the bias-reduced inverse-sampling estimator when
    /// the plan stops at the first positive pool).
    #[error("degenerate estimator: {0}")]
    DegenerateEstimator(String),

    /// Reading or writing a file failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable code for the error class, emitted by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "INVALID_INPUT",
            Error::InfeasibleDesign(_) => "INFEASIBLE_DESIGN",
            Error::DegenerateEstimator(_) => "DEGENERATE_ESTIMATOR",
            Error::Io(_) => "IO",
        }
    }

    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 2,
            Error::InfeasibleDesign(_) => 3,
            Error::DegenerateEstimator(_) => 4,
            Error::Io(_) => 5,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
