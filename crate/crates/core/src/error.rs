use thiserror::Error;

/// Errors raised by state construction, channels and precision evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("branch probabilities sum to {sum}, expected 1")]
    Inconsistent { sum: f64 },

    #[error("cannot calibrate {family} to mean particle number {target}: {reason}")]
    Calibration {
        family: String,
        target: f64,
        reason: String,
    },

    #[error("truncation at n_max = {n_max} leaves tail mass {tail:e}; increase n_max")]
    Truncation { n_max: usize, tail: f64 },

    #[error("unsupported state structure: {0}")]
    UnsupportedStructure(String),

    #[error("not a valid density matrix: eigenvalue {min_eigenvalue:e} below tolerance")]
    InvalidDensity { min_eigenvalue: f64 },

    #[error("Mandel Q undefined: mode {mode} has zero mean occupation")]
    UndefinedMandelQ { mode: usize },

    #[error("no closed-form QFI for {family} with phase {choice}")]
    NoFormula { family: String, choice: String },

    #[error("quantum Fisher information {qfi} carries no phase information")]
    NoInformation { qfi: f64 },

    #[error("eigensolver failed to converge on a {dim}x{dim} matrix")]
    NoConvergence { dim: usize },

    #[error("{what} of size {size} exceeds the supported limit {limit}")]
    Size {
        what: &'static str,
        size: usize,
        limit: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
