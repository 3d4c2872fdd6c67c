//! Proximal Jacobian ADMM for nonconvex problems with linearly coupled
//! agents:
//!
//! ```text
//! min  g(x) + sum_i f_i(x_i)   s.t.  sum_i A_i x_i = b,  x_i in X_i (boxes)
//! ```
//!
//! Each iteration solves one proximal subproblem per agent against the same
//! snapshot, then applies a damped multiplier update
//! `lambda <- (1 - tau) lambda + rho (A x - b)`. Convergence is tracked
//! through a Lyapunov function whose decrease is audited per iteration.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below fix the scalar.

// `!(a > b)` is used on purpose so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod instances;
pub mod lcg;
pub mod linalg;
pub mod oracle;
pub mod params;
pub mod problem;
pub mod scalar;
pub mod subproblem;

pub use diagnostics::{
    lambda_bound_check, stationarity_measure, suboptimality, sufficient_decrease_audit, StationarityReport,
};
pub use engine::{Engine, IterateState, RunOptions, RunResult, StopReason, TraceRecord};
pub use error::{AdmmError, Result};
pub use lcg::Lcg64;
pub use linalg::Matrix;
pub use oracle::{constrained_grid_search, multistart_penalty_solve, OracleMethod, OracleResult};
pub use params::{validate_params, AlgoParams, DerivedConstants, ValidationReport};
pub use problem::{AgentSpec, BoxSet, CoupledProblem, Oracle};
pub use scalar::Real;
pub use subproblem::SolverSettings;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type BoxSet64 = BoxSet<f64>;
pub type BoxSet32 = BoxSet<f32>;
pub type AgentSpec64 = AgentSpec<f64>;
pub type AgentSpec32 = AgentSpec<f32>;
pub type CoupledProblem64 = CoupledProblem<f64>;
pub type CoupledProblem32 = CoupledProblem<f32>;
pub type AlgoParams64 = AlgoParams<f64>;
pub type AlgoParams32 = AlgoParams<f32>;
pub type SolverSettings64 = SolverSettings<f64>;
pub type SolverSettings32 = SolverSettings<f32>;
pub type RunResult64 = RunResult<f64>;
pub type RunResult32 = RunResult<f32>;
pub type TraceRecord64 = TraceRecord<f64>;
pub type TraceRecord32 = TraceRecord<f32>;
