use thiserror::Error;

use crate::solvers::IterationTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("fractional order s = {0} is outside (0, 1)")]
    OrderOutOfRange(f64),

    #[error("resonant exponents: pq = {pq} (the case pq = 1 is excluded)")]
    Resonant { pq: f64 },

    #[error("regime {regime} is not handled by {solver}")]
    WrongRegime { regime: String, solver: &'static str },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular Jacobian in Newton polish")]
    SingularJacobian,

    #[error("{solver} did not converge after {} iterations: {reason}", trace.len())]
    NonConvergence { solver: &'static str, reason: String, trace: Box<IterationTrace> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
