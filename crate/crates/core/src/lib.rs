//! Discounted linear quadratic regulation with nonlinear linear-in-parameter policies.
//!
//! The crate covers the LQR environment and its discounted cost ([`problem`]), a
//! discounted Riccati solver used as ground truth ([`riccati`]), the policy classes
//! ([`policy`]), exact policy gradients and the inner descent loop ([`optim`]), the
//! discount-factor continuation schedule ([`homotopy`]), the two-point local-minimum
//! construction ([`counterexample`]) and the file-based experiment driver behind the
//! command-line tool ([`experiment`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod counterexample;
pub mod error;
pub mod experiment;
pub mod homotopy;
pub mod optim;
pub mod policy;
pub mod problem;
pub mod quadrature;
pub mod riccati;

pub use error::{Error, Result};
pub use homotopy::{run_homotopy, run_vanilla, AdvanceRule, HomotopyLog, HomotopySchedule};
pub use optim::{
    cost_gradient, fd_gradient, hessian_at, pg_inner, GradientReport, PgConfig, TrainLog,
};
pub use policy::{BasisFunction, Policy, PolicyClass};
pub use problem::{
    discounted_cost, Controller, Horizon, InitialDistribution, LqrProblem, Trajectory,
};
pub use riccati::{gamma_sweep, optimal_cost, optimal_theta, solve_dare, DareSolution};
