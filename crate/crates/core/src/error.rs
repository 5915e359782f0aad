use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("argument {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("invalid levels: {0}")]
    InvalidLevels(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("conditional CDF is not monotone at {at}: {detail}")]
    NotMonotone { at: f64, detail: &'static str },

    #[error("coupling violated at index {index}: x = {x}, z = {z}")]
    CouplingViolation { index: usize, x: f64, z: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
