use thiserror::Error;

use crate::pde::CflReport;

/// Errors raised by the simulators, solvers and the experiment layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("opinion cell count must be even and at least 2, got {0}")]
    OddGrid(usize),

    #[error("death rate does not diverge at the maximal age: pi(A-)/max pi = {ratio:.3e}")]
    NonCompactSupport { ratio: f64 },

    #[error("age kernel not supported here: {0}")]
    KernelRejected(String),

    #[error("CFL violation: {0}")]
    CflViolation(CflReport),

    #[error("solution diverged at t = {time}: {reason}")]
    Diverged { time: f64, reason: String },

    #[error("not converged after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Validation(_) | Error::InvalidParams(_) | Error::OddGrid(_) => 2,
            Error::KernelRejected(_) | Error::NonCompactSupport { .. } => 2,
            Error::CflViolation(_) => 3,
            Error::Diverged { .. } => 4,
            Error::NotConverged { .. } => 5,
            Error::Io(_) | Error::Json(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
