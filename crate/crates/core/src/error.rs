use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("adaptive step fell below {min_step:e} s at t = {t}")]
    StepSizeUnderflow { t: f64, min_step: f64 },

    #[error("mass matrix is singular at q = ({q0}, {q1})")]
    SingularMass { q0: f64, q1: f64 },

    #[error("inconsistent problem: {0}")]
    Spec(String),

    #[error("non-finite value while evaluating {what} (node {node:?})")]
    EvaluationFailure { what: &'static str, node: Option<usize> },

    #[error("QP subproblem failed: {0}")]
    Qp(String),

    #[error("no feasible cycle count: the single-cycle problem did not converge ({status})")]
    NoFeasibleK { status: String },

    #[error("the first sliding window did not converge ({status})")]
    FirstWindowInfeasible { status: String },

    #[error("config error in {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
