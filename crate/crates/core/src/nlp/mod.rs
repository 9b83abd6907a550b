//! Smooth nonlinear programming.
//!
//! Problems are posed as
//!
//! ```text
//! min f(x)   s.t.   cl ≤ c(x) ≤ cu,   lb ≤ x ≤ ub
//! ```
//!
//! through the [`NlpProblem`] trait and solved by [`solve`], a line-search
//! SQP method. Each iteration solves a sparse convex QP, merit decrease is
//! measured with the ℓ1 exact penalty function, and curvature comes from
//! damped BFGS updates (or finite differences) on disjoint variable blocks.

mod dense;
mod qp;
mod sqp;

pub use dense::DenseNlp;
pub use sqp::solve;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A smooth NLP with a fixed constraint-Jacobian sparsity pattern.
///
/// Equality constraints and fixed variables are expressed with equal lower
/// and upper bounds. Infinite bounds are allowed.
pub trait NlpProblem: Sync {
    fn num_vars(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>);

    fn objective(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<()>;
    fn constraints(&self, x: &[f64], c: &mut [f64]) -> Result<()>;

    /// `(row, col)` of every structural nonzero of `∂c/∂x`.
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    /// Values in the order of [`NlpProblem::jacobian_structure`].
    fn jacobian_values(&self, x: &[f64], values: &mut [f64]) -> Result<()>;

    /// Constraints and Jacobian at once, for problems that share work
    /// between the two.
    fn constraints_and_jacobian(&self, x: &[f64], c: &mut [f64], values: &mut [f64]) -> Result<()> {
        self.constraints(x, c)?;
        self.jacobian_values(x, values)
    }

    /// Constant Hessian of the part of the objective that is exactly
    /// quadratic, as upper-triangle `(row, col, value)` triplets. Repeated
    /// entries are summed. The solver uses it as is and only approximates
    /// the remaining curvature.
    fn quadratic_hessian(&self) -> Vec<(usize, usize, f64)> {
        Vec::new()
    }

    /// Disjoint groups of variables such that the Hessian of the Lagrangian,
    /// minus [`NlpProblem::quadratic_hessian`], is block diagonal over them.
    /// Variables in no group are treated as having no such curvature.
    fn curvature_blocks(&self) -> Vec<Vec<usize>> {
        vec![(0..self.num_vars()).collect()]
    }
}

/// How the non-quadratic part of the Lagrangian Hessian is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// Powell-damped BFGS, one dense approximation per curvature block.
    DampedBfgs,
    /// Forward differences of the Lagrangian gradient, one perturbation per
    /// column index shared by all blocks, projected onto positive
    /// definite matrices.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stationarity tolerance on the scaled projected Lagrangian gradient.
    pub tol_opt: f64,
    /// Largest admissible constraint violation.
    pub tol_con: f64,
    pub max_iter: usize,
    pub hessian: HessianMode,
    /// Iterations without a 1% drop of the best violation, above `tol_con`,
    /// after which the problem is declared infeasible.
    pub stall_iterations: usize,
    /// Consecutive line-search failures tolerated before giving up.
    pub max_line_search_failures: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_opt: 1e-6,
            tol_con: 1e-4,
            max_iter: 3000,
            hessian: HessianMode::DampedBfgs,
            stall_iterations: 50,
            max_line_search_failures: 3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_opt > 0.0) {
            return Err(Error::invalid("tol_opt", "must be > 0"));
        }
        if !(self.tol_con > 0.0) {
            return Err(Error::invalid("tol_con", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
    Diverged,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Diverged => "diverged",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One SQP iteration, as logged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    /// Max constraint violation at the start of the iteration.
    pub violation: f64,
    pub stationarity: f64,
    /// Accepted step length, 0 when no step was taken.
    pub step: f64,
    pub penalty: f64,
    /// Merit before and after the step, both with this iteration's penalty.
    pub merit_before: f64,
    pub merit_after: f64,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub status: SolveStatus,
    /// Final iterate. For non-converged runs, the last accepted iterate.
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub stationarity: f64,
    pub iterations: usize,
    pub wall_time: Duration,
    pub history: Vec<IterationRecord>,
}

impl NlpSolution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Largest violation of `cl ≤ c ≤ cu`.
pub fn max_violation(c: &[f64], cl: &[f64], cu: &[f64]) -> f64 {
    c.iter()
        .zip(cl.iter().zip(cu))
        .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
        .fold(0.0, f64::max)
}

/// Sum of violations of `cl ≤ c ≤ cu`.
pub fn l1_violation(c: &[f64], cl: &[f64], cu: &[f64]) -> f64 {
    c.iter()
        .zip(cl.iter().zip(cu))
        .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
        .sum()
}
