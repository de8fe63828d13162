//! Positive periodic mild solutions of delayed evolution equations
//! `u' + A u = F(t, u(t), u(t - tau))` on a finite-dimensional state space.
//!
//! The generator `A` is a matrix with nonpositive off-diagonal entries, so
//! `T(t) = exp(-A t)` preserves the nonnegative cone. Periodic solutions are
//! found as fixed points of `Q = P o F`, where `P` maps a periodic forcing to
//! the unique periodic mild solution of the linear problem.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod expm;
pub mod ivp;
pub mod nonlinearity;
pub mod operators;
pub mod periodic;
pub mod problems;

pub use analysis::{
    bellman_bound, check_order_condition, check_spectral_gap, fourier_periodic_oracle, stability_report, BellmanResult,
    CheckReport, GapReport, HypothesisMode, StabilityReport,
};
pub use error::{Error, Result};
pub use ivp::{solve_ivp, HistorySegment, Trajectory};
pub use nonlinearity::{nonlinearity_eval, Forcing, NonlinearityKind, NonlinearitySpec};
pub use operators::{phi1_apply, semigroup_apply, semigroup_matrix, spectrum, Generator, SpectrumInfo};
pub use periodic::{periodic_linear_solve, picard_solve, PeriodicSolveResult, PeriodicTrajectory, PicardOptions};
pub use problems::{load_problem, ProblemSpec};
