//! Steering the state distribution of a discrete linear time-varying
//! stochastic system from `N(mu0, Sigma0)` to exactly `N(muF, SigmaF)` at
//! step `N + 1` with minimum expected input energy.
//!
//! The pipeline is: build an [`LtvSystem`] and [`BoundaryConditions`],
//! [`stack_operators`], [`solve_lambda`], [`build_policy`], then check the
//! result with [`propagate_moments`] or [`monte_carlo`].
//!
//! ```
//! use covsteer_core::*;
//!
//! let (system, bc) = examples::lti_example();
//! let ops = stack_operators(&system);
//! let lambda = solve_lambda(&system, &ops, &bc, &SolverOptions::default()).unwrap();
//! let policy = build_policy(&system, &ops, &bc, lambda).unwrap();
//! let moments = propagate_moments(&system, &policy, &bc).unwrap();
//! assert!((moments.terminal_covariance() - &bc.sigma_f).norm() < 1e-8 * bc.sigma_f.norm());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diffusion;
pub mod error;
pub mod examples;
pub mod linalg;
pub mod lqg;
pub mod mean;
pub mod multiplier;
pub mod nodiffusion;
pub mod simulation;
pub mod spec_file;
pub mod stacked;
pub mod system;

pub use diffusion::{
    build_policy, feasibility_check, feasibility_margin, given_lambda, lambda_residual, policy_step, solve_lambda,
    PolicyState, SteeringPolicy,
};
pub use error::{Result, SteerError};
pub use linalg::{Mat, Vector};
pub use lqg::{equivalence_check, riccati_backward, EquivalenceReport, LqgPolicy, LqgSolution};
pub use mean::{steer_mean, MeanPlan};
pub use multiplier::{JacobianMode, LambdaMatrix, SolveStrategy, SolverOptions};
pub use nodiffusion::{
    riccati_residual, steer_cov_riccati, steer_cov_svd, steer_partial_cov, DiffusionlessGain, SvdFactors,
};
pub use simulation::{
    cost_decompose, monte_carlo, propagate_moments, CostSummary, EnsembleResult, LinearPolicy, MomentTrajectory,
    MonteCarloOptions,
};
pub use spec_file::{load_spec, parse_spec, render_spec, save_spec, SpecError};
pub use stacked::{controllability_check, stack_operators, Controllability, StackedOperators};
pub use system::{validate, BoundaryConditions, LtvSystem, ValidationReport, Violation};
