//! Exact augmented Lagrangians for constrained variational problems.
//!
//! The crate evaluates the exact augmented Lagrangian 𝓛, its gradient and the
//! quadratic form whose lower bound controls exactness, for four problem
//! families on tensor grids: boundary-constrained, isoperimetric,
//! nonholonomic, and linear optimal control. A quasi-Newton solver minimises
//! 𝓛 jointly in the primal variable and the multipliers.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auglag;
pub mod boundary;
pub mod catalog;
pub mod error;
pub mod function_spaces;
pub mod integrand;
pub mod isoperimetric;
pub mod nonholonomic;
pub mod optimal_control;
pub mod oracle;
pub mod solver;

pub use auglag::{
    ConstrainedProblem, DiagnosticRow, DualState, GradientMode, KktResidual, QForm, Vector,
};
pub use error::{Error, Result};
pub use function_spaces::{Grid, GridFunction, Placement};
pub use catalog::{Benchmark, ProblemId, ProblemParams, Reference};
pub use optimal_control::{ControlFunction, LinearSystem, PropagatorMode};
pub use solver::{minimize_auglag, InitialPoint, SolveResult, SolveStatus, SolverConfig};
