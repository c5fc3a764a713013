use thiserror::Error;

use crate::sampler::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {message} (residual estimate {residual:e})")]
    Numeric { message: String, residual: f64 },

    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// Exact-mode digit grew past the bit-size cap; the trajectory sampled so
    /// far is kept.
    #[error("trajectory capped after {} digits: digit exceeds {cap_bits} bits", prefix.b.len())]
    CappedTrajectory {
        prefix: Box<Trajectory>,
        cap_bits: u64,
    },

    #[error("expansion terminated after {got} of {wanted} digits")]
    ShortTrajectory { got: usize, wanted: usize },

    #[error("internal consistency error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
