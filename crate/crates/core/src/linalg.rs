//! Dense kernels shared by the solver and the backward-error code.

use nalgebra::{QR, SVD};

use crate::error::{IlseError, Result};
use crate::types::{Matrix, Vector};

pub const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;

/// Singular values in decreasing order. Wide inputs are transposed first so
/// the SVD always runs on a tall matrix.
pub fn singular_values(mat: &Matrix) -> Vector {
    if mat.is_empty() {
        return Vector::zeros(0);
    }
    let tall = if mat.nrows() >= mat.ncols() {
        mat.clone()
    } else {
        mat.transpose()
    };
    let mut sv = SVD::new(tall, false, false).singular_values;
    sv.as_mut_slice()
        .sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// `(σ_min, σ_max)` over the `min(rows, cols)` singular values.
pub fn extreme_singular_values(mat: &Matrix) -> (f64, f64) {
    let sv = singular_values(mat);
    if sv.is_empty() {
        return (0.0, 0.0);
    }
    (sv[sv.len() - 1], sv[0])
}

pub fn spectral_norm(mat: &Matrix) -> f64 {
    extreme_singular_values(mat).1
}

/// Orthonormal basis of the null space of a full-row-rank `s × n` matrix,
/// taken from the trailing `n - s` columns of the full orthogonal factor of
/// its transpose.
pub fn null_space_basis(mat: &Matrix) -> Matrix {
    let (s, n) = mat.shape();
    if s == 0 {
        return Matrix::identity(n, n);
    }
    let qr = QR::new(mat.transpose());
    // Qᵀ·I applies every Householder reflector, giving the full n × n factor.
    let mut qt = Matrix::identity(n, n);
    qr.q_tr_mul(&mut qt);
    qt.rows(s, n - s).transpose()
}

/// Minimum-norm solution of the underdetermined system `mat · z = rhs`
/// for a full-row-rank wide matrix.
#[derive(Debug, Clone)]
pub struct MinNormSolution {
    pub z: Vector,
    pub norm: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

/// Solves through `matᵀ = QR`: `z = Q R⁻ᵀ rhs`, so `‖z‖ = ‖R⁻ᵀ rhs‖`.
/// The singular values of `R` are those of `mat`, giving the rank check
/// without a second factorization of the wide matrix.
pub fn min_norm_solve(
    what: &'static str,
    mat: &Matrix,
    rhs: &Vector,
    rel_tol: f64,
) -> Result<MinNormSolution> {
    let (qr, w, sigma_min, sigma_max) = factor_and_solve(what, mat, rhs, rel_tol)?;
    let z = qr.q() * &w;
    Ok(MinNormSolution {
        norm: w.norm(),
        z,
        sigma_min,
        sigma_max,
    })
}

/// `‖z‖` of the minimum-norm solution, without forming `z`.
pub fn min_norm_solution_norm(
    what: &'static str,
    mat: &Matrix,
    rhs: &Vector,
    rel_tol: f64,
) -> Result<f64> {
    let (_, w, _, _) = factor_and_solve(what, mat, rhs, rel_tol)?;
    Ok(w.norm())
}

type Factored = (QR<f64, nalgebra::Dyn, nalgebra::Dyn>, Vector, f64, f64);

fn factor_and_solve(what: &'static str, mat: &Matrix, rhs: &Vector, rel_tol: f64) -> Result<Factored> {
    let (rows, cols) = mat.shape();
    if rhs.len() != rows {
        return Err(IlseError::DimensionMismatch {
            what,
            expected: rows,
            found: rhs.len(),
        });
    }
    if rows > cols {
        return Err(IlseError::InvalidInput(format!(
            "{what}: minimum-norm solve needs a wide matrix, got {rows} x {cols}"
        )));
    }
    let qr = QR::new(mat.transpose());
    let r = qr.r();
    let (sigma_min, sigma_max) = extreme_singular_values(&r);
    let rank_error = IlseError::RankDeficient {
        what,
        sigma_min,
        sigma_max,
    };
    if !(sigma_min > rel_tol * sigma_max) {
        return Err(rank_error);
    }
    let w = r.transpose().solve_lower_triangular(rhs).ok_or(rank_error)?;
    Ok((qr, w, sigma_min, sigma_max))
}
