//! Linearized estimate of the normwise backward error of a candidate
//! solution `y`.
//!
//! Dropping the second-order terms of the perturbed optimality conditions
//! leaves the underdetermined system
//!
//! ```text
//! J(ξ) · [vec(E); θ1 f; θ2 vec(F); θ3 g] = [Bᵀξ − AᵀΣ r_y; d − B y]
//! ```
//!
//! with `r_y = b − A y`. `ρ(ξ)` is the norm of its minimum-norm solution and
//! `τ(ξ) = ‖J(ξ)†‖₂`. Both are bounded using the `ξ`-independent part of
//! `J`, whose smallest singular value is `α`.

use serde::Serialize;

use crate::error::{check_len, IlseError, Result};
use crate::linalg::{
    extreme_singular_values, min_norm_solution_norm, min_norm_solve, singular_values, spectral_norm, MinNormSolution,
};
use crate::types::{IlseProblem, Matrix, Vector, WeightScheme};
use nalgebra::SVD;

/// Relative threshold on `σ_min / σ_max` below which `J(ξ)` (or `B`) is
/// treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Dense `J(ξ)` of shape `(n + s) × (nm + m + ns + s)`.
#[derive(Debug, Clone)]
pub struct LinearizationOperator {
    pub j: Matrix,
    pub xi: Vector,
    pub weights: WeightScheme,
    m: usize,
    n: usize,
    s: usize,
}

impl LinearizationOperator {
    /// Column widths of the blocks acting on `vec(E)`, `θ1 f`, `θ2 vec(F)`
    /// and `θ3 g`.
    pub fn block_widths(&self) -> [usize; 4] {
        [self.n * self.m, self.m, self.n * self.s, self.s]
    }

    pub fn nrows(&self) -> usize {
        self.j.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.j.ncols()
    }

    /// Packs a perturbation into the unknown vector `z` the operator acts on.
    pub fn pack(&self, pert: &crate::types::PerturbationQuadruple) -> Result<Vector> {
        check_len("rows of E", self.m, pert.e.nrows())?;
        check_len("columns of E", self.n, pert.e.ncols())?;
        check_len("rows of F", self.s, pert.f_mat.nrows())?;
        let w = &self.weights;
        let parts: Vec<f64> = pert
            .e
            .iter()
            .copied()
            .chain(pert.f.iter().map(|v| w.theta1 * v))
            .chain(pert.f_mat.iter().map(|v| w.theta2 * v))
            .chain(pert.g.iter().map(|v| w.theta3 * v))
            .collect();
        Ok(Vector::from_vec(parts))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) enum AssemblyFault {
    #[default]
    None,
    /// Adds the `AᵀΣ(yᵀ ⊗ I_m)` term instead of subtracting it.
    FlippedCrossTerm,
}

/// Writes `Iₙ ⊗ (r_yᵀΣ) − AᵀΣ(yᵀ ⊗ I_m)` into rows `0..n`, columns
/// `0..nm` of `out`.
///
/// Column `j·m + k` multiplies `E[k, j]`, so entry `(i, j·m + k)` is
/// `δ_ij (Σ r_y)_k − (ΣA)[k, i] · y_j`.
fn fill_residual_block(
    out: &mut Matrix,
    sigma_a: &Matrix,
    sigma_r: &Vector,
    y: &Vector,
    fault: AssemblyFault,
) {
    let (m, n) = sigma_a.shape();
    let cross_sign = match fault {
        AssemblyFault::None => -1.0,
        AssemblyFault::FlippedCrossTerm => 1.0,
    };
    for j in 0..n {
        let yj = cross_sign * y[j];
        for k in 0..m {
            let col = j * m + k;
            for i in 0..n {
                out[(i, col)] = yj * sigma_a[(k, i)];
            }
            out[(j, col)] += sigma_r[k];
        }
    }
}

fn fill_a_block(out: &mut Matrix, sigma_a: &Matrix, offset: usize, inv_theta1: f64) {
    let (m, n) = sigma_a.shape();
    for k in 0..m {
        for i in 0..n {
            out[(i, offset + k)] = inv_theta1 * sigma_a[(k, i)];
        }
    }
}

fn check_candidate(problem: &IlseProblem, y: &Vector, xi: Option<&Vector>) -> Result<()> {
    check_len("candidate solution", problem.n(), y.len())?;
    if let Some(xi) = xi {
        check_len("multiplier", problem.s(), xi.len())?;
    }
    Ok(())
}

/// Assembles
///
/// ```text
/// J(ξ) = [ Iₙ⊗(r_yᵀΣ) − AᵀΣ(yᵀ⊗I_m)   θ1⁻¹AᵀΣ   −θ2⁻¹(Iₙ⊗ξᵀ)   0        ]
///        [ 0                          0         θ2⁻¹(yᵀ⊗I_s)   −θ3⁻¹I_s ]
/// ```
pub fn assemble_j(
    problem: &IlseProblem,
    y: &Vector,
    xi: &Vector,
    w: &WeightScheme,
) -> Result<LinearizationOperator> {
    w.validate()?;
    check_candidate(problem, y, Some(xi))?;
    let (m, n, s) = (problem.m(), problem.n(), problem.s());
    let sigma_a = problem.sigma_a();
    let sigma_r = problem.sig.apply(&problem.residual(y)?)?;

    let off_f = n * m;
    let off_ff = off_f + m;
    let off_g = off_ff + n * s;
    let mut j = Matrix::zeros(n + s, off_g + s);

    fill_residual_block(&mut j, &sigma_a, &sigma_r, y, AssemblyFault::None);
    fill_a_block(&mut j, &sigma_a, off_f, 1.0 / w.theta1);

    let inv_t2 = 1.0 / w.theta2;
    for col_j in 0..n {
        for k in 0..s {
            let col = off_ff + col_j * s + k;
            // −θ2⁻¹(Iₙ ⊗ ξᵀ): row col_j picks ξ_k
            j[(col_j, col)] = -inv_t2 * xi[k];
            // θ2⁻¹(yᵀ ⊗ I_s): row n + k picks y_{col_j}
            j[(n + k, col)] = inv_t2 * y[col_j];
        }
    }
    for k in 0..s {
        j[(n + k, off_g + k)] = -1.0 / w.theta3;
    }

    Ok(LinearizationOperator {
        j,
        xi: xi.clone(),
        weights: *w,
        m,
        n,
        s,
    })
}

/// `(Bᵀξ − AᵀΣ r_y, d − B y)`.
pub fn rhs_vector(problem: &IlseProblem, y: &Vector, xi: &Vector) -> Result<Vector> {
    check_candidate(problem, y, Some(xi))?;
    let (n, s) = (problem.n(), problem.s());
    let r = problem.residual(y)?;
    let top = problem.constraint.tr_mul(xi) - problem.at_sigma(&r);
    let bottom = &problem.d - &problem.constraint * y;
    let mut out = Vector::zeros(n + s);
    out.rows_mut(0, n).copy_from(&top);
    out.rows_mut(n, s).copy_from(&bottom);
    Ok(out)
}

/// Minimum-norm solution of `J(ξ) z = rhs`, the quantity behind `ρ(ξ)`.
pub fn linearized_solution(
    problem: &IlseProblem,
    y: &Vector,
    xi: &Vector,
    w: &WeightScheme,
) -> Result<MinNormSolution> {
    let op = assemble_j(problem, y, xi, w)?;
    let rhs = rhs_vector(problem, y, xi)?;
    min_norm_solve("J(xi)", &op.j, &rhs, RANK_TOLERANCE)
}

/// `ρ(ξ) = ‖J(ξ)† (Bᵀξ − AᵀΣ r_y; d − B y)‖₂`.
pub fn rho_at(problem: &IlseProblem, y: &Vector, xi: &Vector, w: &WeightScheme) -> Result<f64> {
    let op = assemble_j(problem, y, xi, w)?;
    let rhs = rhs_vector(problem, y, xi)?;
    min_norm_solution_norm("J(xi)", &op.j, &rhs, RANK_TOLERANCE)
}

/// `τ(ξ) = ‖J(ξ)†‖₂ = 1 / σ_min(J(ξ))`.
pub fn tau_at(problem: &IlseProblem, y: &Vector, xi: &Vector, w: &WeightScheme) -> Result<f64> {
    let op = assemble_j(problem, y, xi, w)?;
    let (sigma_min, sigma_max) = extreme_singular_values(&op.j);
    if !(sigma_min > RANK_TOLERANCE * sigma_max) {
        return Err(IlseError::RankDeficient {
            what: "J(xi)",
            sigma_min,
            sigma_max,
        });
    }
    Ok(1.0 / sigma_min)
}

/// `ξ1 = (Bᵀ)† AᵀΣ r_y`, the minimizer of `‖Bᵀξ − AᵀΣ r_y‖₂`.
pub fn xi_one(problem: &IlseProblem, y: &Vector) -> Result<Vector> {
    check_candidate(problem, y, None)?;
    let s = problem.s();
    if s == 0 {
        return Ok(Vector::zeros(0));
    }
    let target = problem.at_sigma(&problem.residual(y)?);
    let svd = SVD::new(problem.constraint.transpose(), true, true);
    let sv = &svd.singular_values;
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    if !(sigma_min > RANK_TOLERANCE * sigma_max) {
        return Err(IlseError::RankDeficient {
            what: "B",
            sigma_min,
            sigma_max,
        });
    }
    svd.solve(&target, 0.0)
        .map_err(|e| IlseError::InvalidInput(e.to_string()))
}

/// `[Iₙ⊗(r_yᵀΣ) − AᵀΣ(yᵀ⊗I_m), θ1⁻¹AᵀΣ]`, the `ξ`-independent leading
/// block row of `J`.
pub fn alpha_matrix(problem: &IlseProblem, y: &Vector, w: &WeightScheme) -> Result<Matrix> {
    alpha_matrix_with(problem, y, w, AssemblyFault::None)
}

pub(crate) fn alpha_matrix_with(
    problem: &IlseProblem,
    y: &Vector,
    w: &WeightScheme,
    fault: AssemblyFault,
) -> Result<Matrix> {
    w.validate()?;
    check_candidate(problem, y, None)?;
    let (m, n) = (problem.m(), problem.n());
    let sigma_a = problem.sigma_a();
    let sigma_r = problem.sig.apply(&problem.residual(y)?)?;
    let mut out = Matrix::zeros(n, n * m + m);
    fill_residual_block(&mut out, &sigma_a, &sigma_r, y, fault);
    fill_a_block(&mut out, &sigma_a, n * m, 1.0 / w.theta1);
    Ok(out)
}

/// `α`: smallest singular value of [`alpha_matrix`], from an SVD of its
/// (tall) transpose.
pub fn alpha(problem: &IlseProblem, y: &Vector, w: &WeightScheme) -> Result<f64> {
    alpha_with(problem, y, w, AssemblyFault::None)
}

pub(crate) fn alpha_with(
    problem: &IlseProblem,
    y: &Vector,
    w: &WeightScheme,
    fault: AssemblyFault,
) -> Result<f64> {
    let mat = alpha_matrix_with(problem, y, w, fault)?;
    let sv = singular_values(&mat);
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `α` from the eigenvalues of the `n × n` Gram matrix. Loses about half
/// the digits of [`alpha`] when `α` is small.
pub fn alpha_gram(problem: &IlseProblem, y: &Vector, w: &WeightScheme) -> Result<f64> {
    let mat = alpha_matrix(problem, y, w)?;
    let gram = &mat * mat.transpose();
    let min_eig = nalgebra::SymmetricEigen::new(gram).eigenvalues.min();
    Ok(min_eig.max(0.0).sqrt())
}

/// `‖r_y‖₂ / sqrt(1 + θ1² ‖y‖₂²)`, a lower bound on `α`.
pub fn alpha_lower_bound(problem: &IlseProblem, y: &Vector, w: &WeightScheme) -> Result<f64> {
    check_candidate(problem, y, None)?;
    let r = problem.residual(y)?;
    let t1y = w.theta1 * y.norm();
    Ok(r.norm() / (1.0 + t1y * t1y).sqrt())
}

/// `τ0 = max{θ3, α⁻¹}`, a uniform bound on `τ(ξ)`.
pub fn tau_zero(problem: &IlseProblem, y: &Vector, w: &WeightScheme) -> Result<f64> {
    tau_zero_from_alpha(alpha(problem, y, w)?, w)
}

fn tau_zero_from_alpha(alpha: f64, w: &WeightScheme) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(IlseError::InfiniteTau0);
    }
    Ok(w.theta3.max(1.0 / alpha))
}

/// `sqrt(θ1⁻² + ‖y‖₂²)`, the factor multiplying `τ0 ρ` in every bound.
pub fn bound_scale(y: &Vector, w: &WeightScheme) -> f64 {
    (1.0 / w.theta1).hypot(y.norm())
}

/// `t ↦ 2t / (1 + sqrt(1 + 4 τ0 c t))` with `c = sqrt(θ1⁻² + ‖y‖₂²)`.
pub fn lower_bound_map(t: f64, tau0: f64, scale: f64) -> f64 {
    2.0 * t / (1.0 + (1.0 + 4.0 * tau0 * scale * t).sqrt())
}

/// Certified bound `‖x − y‖₂ ≥ ‖(Bᵀξ1 − AᵀΣ r_y, d − By)‖₂ / ‖[AᵀΣA; B]‖₂`
/// on the distance from `y` to the exact solution.
pub fn solution_distance_lower_bound(problem: &IlseProblem, y: &Vector) -> Result<f64> {
    let xi1 = xi_one(problem, y)?;
    let numerator = rhs_vector(problem, y, &xi1)?.norm();
    if numerator == 0.0 {
        return Ok(0.0);
    }
    let n = problem.n();
    let s = problem.s();
    let mut stacked = Matrix::zeros(n + s, n);
    stacked
        .rows_mut(0, n)
        .copy_from(&problem.a.tr_mul(&problem.sigma_a()));
    stacked.rows_mut(n, s).copy_from(&problem.constraint);
    Ok(numerator / spectral_norm(&stacked))
}

/// Everything the linearization says about the backward error of `y`.
///
/// `mu_upper` and `mu_lower` are evaluated at `ρ(ξ1) ≥ ρ`. The upper bound
/// stays valid under that substitution; `mu_lower` is indicative only since
/// the lower-bound map is increasing in its argument.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackwardErrorReport {
    pub rho_xi1: f64,
    pub rho_xi0: Option<f64>,
    pub tau0: f64,
    pub alpha: f64,
    pub alpha_lower: f64,
    /// `4 τ0 ρ(ξ1) sqrt(θ1⁻² + ‖y‖₂²) < 1`.
    pub small_rho_condition: bool,
    /// `2 ρ(ξ1)` when the small-ρ condition holds.
    pub mu_upper: Option<f64>,
    pub mu_lower: f64,
    pub distance_lower: f64,
    /// False when `r_y = 0`, where the lower-bound theorem does not apply.
    pub bounds_applicable: bool,
    pub xi1: Vec<f64>,
}

pub fn backward_error_bounds(
    problem: &IlseProblem,
    y: &Vector,
    xi0: Option<&Vector>,
    w: &WeightScheme,
) -> Result<BackwardErrorReport> {
    w.validate()?;
    check_candidate(problem, y, xi0)?;
    let residual_nonzero = problem.residual(y)?.iter().any(|v| *v != 0.0);

    let xi1 = xi_one(problem, y)?;
    let rho_xi1 = rho_at(problem, y, &xi1, w)?;
    let rho_xi0 = xi0.map(|xi| rho_at(problem, y, xi, w)).transpose()?;
    let alpha = alpha(problem, y, w)?;
    let alpha_lower = alpha_lower_bound(problem, y, w)?;
    let tau0 = tau_zero_from_alpha(alpha, w)?;
    let scale = bound_scale(y, w);

    let small_rho_condition = 4.0 * tau0 * rho_xi1 * scale < 1.0;
    let mu_upper = (residual_nonzero && small_rho_condition).then_some(2.0 * rho_xi1);
    let mu_lower = lower_bound_map(rho_xi1, tau0, scale);
    let distance_lower = solution_distance_lower_bound(problem, y)?;

    Ok(BackwardErrorReport {
        rho_xi1,
        rho_xi0,
        tau0,
        alpha,
        alpha_lower,
        small_rho_condition,
        mu_upper,
        mu_lower,
        distance_lower,
        bounds_applicable: residual_nonzero,
        xi1: xi1.as_slice().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SignatureMatrix;

    fn t1() -> IlseProblem {
        IlseProblem::new(
            Matrix::from_row_slice(2, 1, &[1.0, 0.0]),
            Vector::from_vec(vec![1.0, 1.0]),
            Matrix::from_row_slice(1, 1, &[1.0]),
            Vector::from_vec(vec![0.0]),
            SignatureMatrix::new(1, 1),
        )
        .unwrap()
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    const W: WeightScheme = WeightScheme {
        theta1: 1.0,
        theta2: 1.0,
        theta3: 1.0,
    };

    #[test]
    fn t1_j_matches_hand_evaluation() {
        let op = assemble_j(&t1(), &v(&[0.1]), &v(&[0.9]), &W).unwrap();
        let expected = Matrix::from_row_slice(
            2,
            6,
            &[0.8, -1.0, 1.0, 0.0, -0.9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, -1.0],
        );
        assert!((&op.j - expected).amax() < 1e-15);
        assert_eq!(op.block_widths(), [2, 2, 1, 1]);
    }

    #[test]
    fn j_shape_at_benchmark_dimensions() {
        let (m, n, s) = (100, 50, 20);
        let p = IlseProblem::new(
            Matrix::from_fn(m, n, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0),
            Vector::from_element(m, 1.0),
            Matrix::from_fn(s, n, |i, j| if i == j { 1.0 } else { 0.0 }),
            Vector::zeros(s),
            SignatureMatrix::new(60, 40),
        )
        .unwrap();
        let op = assemble_j(&p, &Vector::zeros(n), &Vector::zeros(s), &W).unwrap();
        assert_eq!(op.j.shape(), (70, 6120));
        assert_eq!(op.block_widths(), [5000, 100, 1000, 20]);
    }

    #[test]
    fn j_at_zero_y_and_xi() {
        let p = t1();
        let w = WeightScheme::new(2.0, 3.0, 4.0).unwrap();
        let op = assemble_j(&p, &v(&[0.0]), &v(&[0.0]), &w).unwrap();
        // [bᵀΣ, θ1⁻¹AᵀΣ, 0, 0; 0, 0, 0, −θ3⁻¹]
        let expected = Matrix::from_row_slice(
            2,
            6,
            &[1.0, -1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.25],
        );
        assert_eq!(op.j, expected);
    }

    #[test]
    fn j_rejects_bad_dimensions() {
        assert!(assemble_j(&t1(), &v(&[0.1, 0.2]), &v(&[0.9]), &W).is_err());
        assert!(assemble_j(&t1(), &v(&[0.1]), &v(&[]), &W).is_err());
    }

    #[test]
    fn t1_rhs_vectors() {
        let p = t1();
        let r = rhs_vector(&p, &v(&[0.1]), &v(&[0.9])).unwrap();
        assert!((r - v(&[0.0, -0.1])).amax() < 1e-15);
        let r = rhs_vector(&p, &v(&[0.1]), &v(&[0.0])).unwrap();
        assert!((r - v(&[-0.9, -0.1])).amax() < 1e-15);
        assert_eq!(rhs_vector(&p, &v(&[0.0]), &v(&[1.0])).unwrap().amax(), 0.0);
    }

    #[test]
    fn t1_rho_against_normal_equations() {
        // ‖z‖² = rhsᵀ(JJᵀ)⁻¹rhs with JJᵀ = [[3.45, −0.09], [−0.09, 1.01]]
        let det: f64 = 3.45 * 1.01 - 0.09 * 0.09;
        let oracle = (0.01 * 3.45 / det).sqrt();
        let rho = rho_at(&t1(), &v(&[0.1]), &v(&[0.9]), &W).unwrap();
        assert!((rho - oracle).abs() < 1e-14);
        assert!((rho - 0.09962).abs() < 1e-4);
        assert_eq!(rho_at(&t1(), &v(&[0.0]), &v(&[1.0]), &W).unwrap(), 0.0);
    }

    #[test]
    fn t1_tau_is_inverse_smallest_singular_value() {
        let tau = tau_at(&t1(), &v(&[0.1]), &v(&[0.9]), &W).unwrap();
        // eigenvalues of JJᵀ = [[3.45, −0.09], [−0.09, 1.01]]
        let (tr, det): (f64, f64) = (3.45 + 1.01, 3.45 * 1.01 - 0.0081);
        let lmin = tr / 2.0 - ((tr * tr) / 4.0 - det).sqrt();
        assert!((tau - 1.0 / lmin.sqrt()).abs() < 1e-13);
        let jn = spectral_norm(&assemble_j(&t1(), &v(&[0.1]), &v(&[0.9]), &W).unwrap().j);
        assert!(tau >= 1.0 / jn);
    }

    #[test]
    fn t1_xi_one() {
        let p = t1();
        assert!((xi_one(&p, &v(&[0.0])).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!((xi_one(&p, &v(&[0.1])).unwrap()[0] - 0.9).abs() < 1e-15);
        // AᵀΣr_y = 1 − y vanishes at y = 1
        assert!(xi_one(&p, &v(&[1.0])).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn xi_one_rejects_rank_deficient_b() {
        let p = IlseProblem::new(
            Matrix::identity(3, 2),
            Vector::from_element(3, 1.0),
            Matrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            Vector::zeros(2),
            SignatureMatrix::new(2, 1),
        )
        .unwrap();
        assert!(matches!(
            xi_one(&p, &Vector::zeros(2)),
            Err(IlseError::RankDeficient { what: "B", .. })
        ));
    }

    #[test]
    fn t1_alpha_and_lower_bound() {
        let p = t1();
        let a0 = alpha(&p, &v(&[0.0]), &W).unwrap();
        assert!((a0 - 3f64.sqrt()).abs() < 1e-14);
        let a1 = alpha(&p, &v(&[0.1]), &W).unwrap();
        assert!((a1 - 2.64f64.sqrt()).abs() < 1e-14);
        assert!((alpha_gram(&p, &v(&[0.1]), &W).unwrap() - a1).abs() < 1e-12);

        let l0 = alpha_lower_bound(&p, &v(&[0.0]), &W).unwrap();
        assert!((l0 - 2f64.sqrt()).abs() < 1e-15);
        let l1 = alpha_lower_bound(&p, &v(&[0.1]), &W).unwrap();
        assert!((l1 - (1.81f64 / 1.01).sqrt()).abs() < 1e-15);
        assert!(l1 <= a1 && l0 <= a0);
    }

    #[test]
    fn alpha_with_zero_residual_is_scaled_sigma_min_of_a() {
        // r_y = 0 and y = 0 force b = 0
        let a = Matrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 0.5, 1.0, 1.0]);
        let p = IlseProblem::new(
            a.clone(),
            Vector::zeros(3),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Vector::zeros(1),
            SignatureMatrix::new(1, 2),
        )
        .unwrap();
        let w = WeightScheme::new(4.0, 1.0, 1.0).unwrap();
        let got = alpha(&p, &Vector::zeros(2), &w).unwrap();
        let (smin, _) = extreme_singular_values(&a);
        assert!((got - smin / 4.0).abs() < 1e-14);
        assert_eq!(alpha_lower_bound(&p, &Vector::zeros(2), &w).unwrap(), 0.0);
    }

    #[test]
    fn tau_zero_examples() {
        let p = t1();
        assert_eq!(tau_zero(&p, &v(&[0.1]), &W).unwrap(), 1.0);
        let w10 = WeightScheme::new(1.0, 1.0, 10.0).unwrap();
        assert_eq!(tau_zero(&p, &v(&[0.1]), &w10).unwrap(), 10.0);
        assert!(matches!(tau_zero_from_alpha(0.0, &W), Err(IlseError::InfiniteTau0)));
    }

    #[test]
    fn t1_report() {
        let rep = backward_error_bounds(&t1(), &v(&[0.1]), Some(&v(&[1.0])), &W).unwrap();
        assert!((rep.rho_xi1 - 0.09962).abs() < 1e-4);
        assert_eq!(rep.tau0, 1.0);
        assert!(rep.small_rho_condition);
        let cond = 4.0 * rep.rho_xi1 * 1.01f64.sqrt();
        assert!((cond - 0.400).abs() < 1e-3);
        assert!((rep.mu_upper.unwrap() - 2.0 * rep.rho_xi1).abs() < 1e-15);
        assert!(rep.mu_lower <= rep.mu_upper.unwrap());
        assert!(rep.alpha >= rep.alpha_lower);
        assert!((rep.distance_lower - 0.1 / 2f64.sqrt()).abs() < 1e-14);
        assert!(rep.rho_xi0.unwrap() > 0.0);
        assert!(rep.bounds_applicable);
    }

    #[test]
    fn exact_solution_report_is_zero() {
        let rep = backward_error_bounds(&t1(), &v(&[0.0]), None, &W).unwrap();
        assert_eq!(rep.rho_xi1, 0.0);
        assert_eq!(rep.mu_lower, 0.0);
        assert_eq!(rep.mu_upper, Some(0.0));
        assert!(rep.small_rho_condition);
        assert_eq!(rep.distance_lower, 0.0);
    }

    #[test]
    fn zero_residual_marks_bounds_inapplicable() {
        let a = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = v(&[1.0, 2.0]);
        let p = IlseProblem::new(
            a.clone(),
            &a * &y,
            Matrix::from_row_slice(1, 2, &[1.0, -1.0]),
            v(&[0.5]),
            SignatureMatrix::new(2, 1),
        )
        .unwrap();
        let rep = backward_error_bounds(&p, &y, None, &W).unwrap();
        assert!(!rep.bounds_applicable);
        assert!(rep.mu_upper.is_none());
    }

    #[test]
    fn lower_bound_map_is_monotone() {
        let mut prev = 0.0;
        for i in 0..200 {
            let t = i as f64 * 0.05;
            let f = lower_bound_map(t, 3.0, 1.7);
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn pack_orders_blocks_like_j_columns() {
        let p = t1();
        let w = WeightScheme::new(2.0, 3.0, 5.0).unwrap();
        let op = assemble_j(&p, &v(&[0.3]), &v(&[0.2]), &w).unwrap();
        let pert = crate::types::PerturbationQuadruple {
            e: Matrix::from_row_slice(2, 1, &[1.0, 2.0]),
            f: v(&[3.0, 4.0]),
            f_mat: Matrix::from_row_slice(1, 1, &[5.0]),
            g: v(&[6.0]),
        };
        let z = op.pack(&pert).unwrap();
        assert_eq!(z.as_slice(), &[1.0, 2.0, 6.0, 8.0, 15.0, 30.0]);
        assert_eq!(z.len(), op.ncols());
    }
}
