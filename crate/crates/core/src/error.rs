//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by callers that need to map errors to
/// process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid or insufficient input data.
    Data,
    /// Numerical failure (singular matrix, non-finite value).
    Numeric,
    /// Too many failed simulation replicates.
    Simulation,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset contains no units")]
    EmptyDataset,

    #[error("unit {index}: {reason}")]
    InvalidUnit { index: usize, reason: String },

    #[error("unit {index}: expected {expected} covariates, got {got}")]
    CovariateDim {
        index: usize,
        expected: usize,
        got: usize,
    },

    #[error("no assignment target for stratum {stratum}")]
    MissingTarget { stratum: usize },

    #[error("target probability for stratum {stratum} must lie in (0,1), got {pi}")]
    InvalidTarget { stratum: usize, pi: f64 },

    #[error("stratum probabilities sum to {0}, expected 1 within 1e-12")]
    StratumProbSum(f64),

    #[error("stratum {stratum} has an empty arm-{arm} cell")]
    EmptyArm { stratum: usize, arm: u8 },

    #[error("stratum {stratum}, arm {arm}: {n} unit(s) present, at least {need} required")]
    InsufficientCell {
        stratum: usize,
        arm: u8,
        n: usize,
        need: usize,
    },

    #[error("pooled covariance matrix is numerically singular (rcond estimate {rcond:.3e})")]
    SingularCovariance { rcond: f64 },

    #[error("block size {block} times pi {pi} is not an integer")]
    NonIntegralBlock { block: usize, pi: f64 },

    #[error("no stratum passes the {0} filter")]
    NoUsableStrata(&'static str),

    #[error("no donor in cluster {cluster} for stratum {stratum}, arm {arm} ({statistic})")]
    NoDonor {
        cluster: u32,
        stratum: usize,
        arm: u8,
        statistic: &'static str,
    },

    #[error("{failed} of {total} replicates failed, above the {limit_pct}% limit")]
    SimulationFailure {
        failed: usize,
        total: usize,
        limit_pct: f64,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error("{0}")]
    Config(String),
}

impl Error {
    /// Map to the coarse class used for exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::SingularCovariance { .. } | Error::NonFinite { .. } => ErrorClass::Numeric,
            Error::SimulationFailure { .. } => ErrorClass::Simulation,
            _ => ErrorClass::Data,
        }
    }

    /// Interned stratum index the error refers to, when it names one.
    pub fn stratum_index(&self) -> Option<usize> {
        match self {
            Error::MissingTarget { stratum }
            | Error::InvalidTarget { stratum, .. }
            | Error::EmptyArm { stratum, .. }
            | Error::InsufficientCell { stratum, .. }
            | Error::NoDonor { stratum, .. } => Some(*stratum),
            _ => None,
        }
    }
}
