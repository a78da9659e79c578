use thiserror::Error;

/// Errors raised by the state, oracle, bound and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("mode index {index} out of range for a {modes}-mode state")]
    ModeOutOfRange { index: usize, modes: usize },

    #[error("mode indices must differ (got {0} twice)")]
    SameMode(usize),

    #[error("unphysical covariance: smallest eigenvalue of cov + iΩ/2 is {min_eigenvalue:e}")]
    Unphysical { min_eigenvalue: f64 },

    #[error("matrix is not symplectic (max deviation {deviation:e})")]
    NotSymplectic { deviation: f64 },

    #[error("truncation insufficient at dim {dim}: {reason}")]
    Truncation { dim: usize, reason: String },

    #[error("RLD undefined for pure states (leaked weight {leakage:e})")]
    PureState { leakage: f64 },

    #[error("RLD bound unavailable: {0}")]
    RldUnavailable(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
