use thiserror::Error;

use crate::io::ParseError;
use crate::learner::LearnTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or references that do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The restricted kernel does not vanish, so expected totals are unbounded.
    #[error("transience violated: {0}")]
    NotTransient(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("requested operation on an infeasible solve: {0}")]
    Infeasible(String),

    #[error("no convergence after {sweeps} sweeps (last sup-norm delta {last_delta:e})")]
    NotConverged {
        sweeps: usize,
        last_delta: f64,
        residual_history: Vec<f64>,
    },

    #[error("learning did not meet the stopping rule within {steps} steps")]
    MaxStepsExhausted { steps: u64, trace: Box<LearnTrace> },

    #[error("instance too large for exhaustive enumeration: {policies} policies exceed the limit of {limit}")]
    TooLarge { policies: u128, limit: u128 },

    #[error(transparent)]
    Parse(#[from] ParseError),
}
