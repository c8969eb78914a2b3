use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value violates a model invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: u32, horizon: u32 },

    /// The trajectory count bound exceeds the configured enumeration cap.
    #[error("trajectory enumeration cap exceeded: size bound {bound:.3e} > cap {cap:.3e}")]
    CapExceeded { bound: f64, cap: f64 },

    #[error("decoder called with an empty candidate set")]
    EmptyCandidates,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("evaluation mode not available: {0}")]
    ModeMismatch(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
