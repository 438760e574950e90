//! Well-posedness checks and the direct augmented-system solve.

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{check_len, IlseError, Result};
use crate::linalg::{extreme_singular_values, null_space_basis, spectral_norm, UNIT_ROUNDOFF};
use crate::types::{IlseProblem, IlseSolution, Matrix, Vector};

/// Outcome of the existence and uniqueness test: `rank(B) = s` and `AᵀΣA`
/// positive definite on the null space of `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WellPosednessReport {
    pub rank_ok: bool,
    pub projected_pd_ok: bool,
    /// Smallest eigenvalue of `ZᵀAᵀΣAZ`; `+∞` when the null space is trivial.
    pub min_projected_eig: f64,
}

impl WellPosednessReport {
    pub fn is_well_posed(&self) -> bool {
        self.rank_ok && self.projected_pd_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellPosednessTolerances {
    /// Relative threshold on `σ_s(B) / σ_max(B)`.
    pub rank: f64,
    /// Absolute threshold on the smallest projected eigenvalue.
    pub pd: f64,
}

impl WellPosednessTolerances {
    /// `rank = max(s, n)·u`, `pd = u·‖AᵀΣA‖₂`.
    pub fn default_for(problem: &IlseProblem) -> Self {
        let gram = gram_sigma(problem);
        WellPosednessTolerances {
            rank: problem.s().max(problem.n()) as f64 * UNIT_ROUNDOFF,
            pd: UNIT_ROUNDOFF * spectral_norm(&gram),
        }
    }
}

/// `AᵀΣA`, symmetric by construction.
fn gram_sigma(problem: &IlseProblem) -> Matrix {
    let g = problem.a.tr_mul(&problem.sigma_a());
    (&g + g.transpose()) * 0.5
}

pub fn check_well_posedness(
    problem: &IlseProblem,
    rank_tolerance: f64,
    pd_tolerance: f64,
) -> WellPosednessReport {
    let s = problem.s();
    let rank_ok = if s == 0 {
        true
    } else {
        let (smin, smax) = extreme_singular_values(&problem.constraint);
        smax > 0.0 && smin > rank_tolerance * smax
    };

    let z = null_space_basis(&problem.constraint);
    let min_projected_eig = if z.ncols() == 0 {
        f64::INFINITY
    } else {
        let az = &problem.a * &z;
        let mut saz = az.clone();
        saz.rows_mut(problem.sig.p, problem.sig.q).neg_mut();
        let proj = az.tr_mul(&saz);
        let proj = (&proj + proj.transpose()) * 0.5;
        SymmetricEigen::new(proj).eigenvalues.min()
    };

    WellPosednessReport {
        rank_ok,
        projected_pd_ok: min_projected_eig > pd_tolerance,
        min_projected_eig,
    }
}

/// Checks well-posedness with [`WellPosednessTolerances::default_for`].
pub fn check_well_posedness_default(problem: &IlseProblem) -> WellPosednessReport {
    let tol = WellPosednessTolerances::default_for(problem);
    check_well_posedness(problem, tol.rank, tol.pd)
}

/// Builds the symmetric matrix
///
/// ```text
/// [ 0   0   B ] [λ]   [d]
/// [ 0   Σ   A ] [s] = [b]
/// [ Bᵀ  Aᵀ  0 ] [x]   [0]
/// ```
///
/// of order `m + n + s` and its right-hand side.
pub fn assemble_augmented(problem: &IlseProblem) -> Result<(Matrix, Vector)> {
    let (m, n, s) = (problem.m(), problem.n(), problem.s());
    if s == 0 {
        return Err(IlseError::NoConstraints);
    }
    let order = m + n + s;
    let mut k = Matrix::zeros(order, order);
    let (row_s, row_x) = (s, s + m);

    for i in 0..s {
        for j in 0..n {
            let v = problem.constraint[(i, j)];
            k[(i, row_x + j)] = v;
            k[(row_x + j, i)] = v;
        }
    }
    for i in 0..m {
        k[(row_s + i, row_s + i)] = problem.sig.sign(i);
        for j in 0..n {
            let v = problem.a[(i, j)];
            k[(row_s + i, row_x + j)] = v;
            k[(row_x + j, row_s + i)] = v;
        }
    }

    let mut rhs = Vector::zeros(order);
    rhs.rows_mut(0, s).copy_from(&problem.d);
    rhs.rows_mut(row_s, m).copy_from(&problem.b);
    Ok((k, rhs))
}

/// Stacks `(λ, s, x)` in augmented-system order.
pub fn augmented_unknowns(sol: &IlseSolution) -> Vector {
    let (s, m, n) = (sol.lambda.len(), sol.s_vec.len(), sol.x.len());
    let mut out = Vector::zeros(s + m + n);
    out.rows_mut(0, s).copy_from(&sol.lambda);
    out.rows_mut(s, m).copy_from(&sol.s_vec);
    out.rows_mut(s + m, n).copy_from(&sol.x);
    out
}

/// Relative residual `‖𝒜u − c‖₂ / (‖𝒜‖_F ‖u‖₂ + ‖c‖₂)` of the augmented
/// system at the stacked unknowns `u = (λ, s, x)`.
pub fn relative_augmented_residual(problem: &IlseProblem, sol: &IlseSolution) -> Result<f64> {
    let (k, rhs) = assemble_augmented(problem)?;
    let u = augmented_unknowns(sol);
    check_len("augmented unknowns", rhs.len(), u.len())?;
    let res = (&k * &u - &rhs).norm();
    let scale = k.norm() * u.norm() + rhs.norm();
    Ok(if scale == 0.0 { 0.0 } else { res / scale })
}

/// Solves the ILSE problem through a pivoted LU factorization of the
/// augmented matrix. Fails if the problem is not well posed or the
/// factorization breaks down.
pub fn solve_ilse(problem: &IlseProblem) -> Result<IlseSolution> {
    problem.validate()?;
    if problem.s() == 0 {
        return Err(IlseError::NoConstraints);
    }
    let report = check_well_posedness_default(problem);
    if !report.rank_ok {
        return Err(IlseError::NotWellPosed("B does not have full row rank".into()));
    }
    if !report.projected_pd_ok {
        return Err(IlseError::NotWellPosed(format!(
            "AᵀΣA is not positive definite on N(B) (smallest projected eigenvalue {:e})",
            report.min_projected_eig
        )));
    }
    solve_augmented(problem)
}

/// The factorization and back-substitution without the well-posedness
/// pre-check.
pub fn solve_augmented(problem: &IlseProblem) -> Result<IlseSolution> {
    let (m, n, s) = (problem.m(), problem.n(), problem.s());
    let (k, rhs) = assemble_augmented(problem)?;
    let u = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| IlseError::NotWellPosed("augmented matrix is singular".into()))?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(IlseError::NotWellPosed(
            "augmented solve produced non-finite values".into(),
        ));
    }
    let lambda = u.rows(0, s).into_owned();
    let x = u.rows(s + m, n).into_owned();
    let r = &problem.b - &problem.a * &x;
    let s_vec = problem.sig.apply(&r)?;
    Ok(IlseSolution {
        xi: -&lambda,
        lambda,
        x,
        r,
        s_vec,
    })
}

/// `r1 = Bᵀξ − AᵀΣ(b − Ax)`, `r2 = d − Bx`.
pub fn normal_equation_residuals(
    problem: &IlseProblem,
    x: &Vector,
    xi: &Vector,
) -> Result<(Vector, Vector)> {
    check_len("multiplier", problem.s(), xi.len())?;
    let r = problem.residual(x)?;
    let r1 = problem.constraint.tr_mul(xi) - problem.at_sigma(&r);
    let r2 = &problem.d - &problem.constraint * x;
    Ok((r1, r2))
}
