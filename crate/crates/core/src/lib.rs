//! Periodic ordinary differential equations at resonance.
//!
//! The crate computes monodromy matrices of linear periodic systems and
//! classifies their forced behaviour, decides Landesman-Lazer type
//! conditions for scalar, vector and second-order semilinear problems, and
//! traces the curves of periodic orbits parameterized by their average.

use thiserror::Error;

pub mod cli;
pub mod curves;
pub mod expr;
pub mod linear;
pub mod ode;
pub mod pendulum;
pub mod scalar;
pub mod semilinear;
pub mod smatrix;

mod sim;

pub use expr::{ExprError, Expression};
pub use ode::{OdeError, OdeOptions};
pub use smatrix::{DenseMatrix, MatrixError};

/// Numerical tolerances shared by the analyses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Absolute and relative tolerance of the integrator.
    pub ode: f64,
    /// Relative rank tolerance for resonance and range tests.
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ode: 1e-10,
            rank: smatrix::RANK_TOL,
        }
    }
}

impl Tolerances {
    pub fn ode_options(&self) -> OdeOptions {
        OdeOptions::with_tol(self.ode)
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    /// A hypothesis of the underlying theorem does not hold, so the theorem
    /// says nothing about this input.
    #[error("hypothesis failure: {0}")]
    Hypothesis(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// A computed quantity contradicts an inequality that must hold.
    #[error("numerical inconsistency: {0}")]
    Inconsistency(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("numerically unbounded at iterate {0}")]
    Unbounded(usize),
}

impl AnalysisError {
    pub fn is_hypothesis_failure(&self) -> bool {
        matches!(self, AnalysisError::Hypothesis(_))
    }
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;
