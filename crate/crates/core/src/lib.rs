//! Equality-constrained indefinite least squares (ILSE).
//!
//! Solves `min (b − Ax)ᵀ Σ (b − Ax)` subject to `Bx = d`, where
//! `Σ = diag(I_p, −I_q)`, through its symmetric augmented system, and
//! estimates the normwise backward error of a candidate solution by
//! linearizing the perturbed optimality conditions.
//!
//! Module map:
//!
//! - [`types`]: problem data, the signature matrix, weights, perturbations.
//! - [`solver`]: well-posedness test and the augmented-system solve.
//! - [`backward_error`]: `J(ξ)`, `ρ(ξ)`, `ξ1`, `α`, `τ0` and the bounds.
//! - [`oracle`]: numerical minimization of `ρ(ξ)` and independent checks.
//! - [`testgen`]: seeded test problems with prescribed conditioning.
//! - [`harness`]: the experiment pipeline and table output.
//! - [`verify`]: the property suite behind `ilse verify`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backward_error;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod solver;
pub mod testgen;
pub mod types;
pub mod verify;

pub use backward_error::{
    alpha, alpha_lower_bound, assemble_j, backward_error_bounds, rho_at, rhs_vector,
    solution_distance_lower_bound, tau_at, tau_zero, xi_one, BackwardErrorReport,
    LinearizationOperator,
};
pub use error::{IlseError, Result};
pub use solver::{
    assemble_augmented, check_well_posedness, normal_equation_residuals, solve_ilse,
    WellPosednessReport,
};
pub use types::{
    weighted_perturbation_norm, IlseProblem, IlseSolution, Matrix, PerturbationQuadruple,
    SignatureMatrix, Vector, WeightScheme,
};
