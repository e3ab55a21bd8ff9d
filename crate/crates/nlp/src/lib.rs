//! Primal-dual interior-point solver for smooth nonlinear programs.
//!
//! Problems are described through the [`NlpProblem`] trait (values, sparse
//! first derivatives and the Hessian of the Lagrangian). The solver returns
//! primal variables together with the multipliers of every constraint block,
//! which callers need to assemble optimality certificates of their own.
//!
//! Linear algebra is done with an in-tree sparse `LDL^T` factorization
//! ([`ldl`]) ordered by a minimum-degree heuristic ([`ordering`]).

pub mod ipm;
pub mod ldl;
pub mod ordering;
pub mod problem;
pub mod sparse;

pub use ipm::{
    kkt_residual, solve, solve_warm, KktNorms, PrimalDualSolution, SolveStatus, SolverCache, SolverOptions,
    WarmStart,
};
pub use problem::NlpProblem;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlpError {
    #[error("problem dimensions are inconsistent: {0}")]
    Dimension(String),
    #[error("invalid bounds on variable {index}: lower {lower} > upper {upper}")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },
    #[error("invalid solver option: {0}")]
    InvalidOption(String),
    #[error("factorization failed: {0}")]
    Factorization(#[from] ldl::LdlError),
}
