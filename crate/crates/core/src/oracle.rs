//! Independent checks on the closed-form paths.
//!
//! The linearized estimate is `ρ = min_ξ ρ(ξ)`, which has no closed form;
//! [`minimize_rho`] searches for it numerically so the gap to `ρ(ξ1)` can be
//! measured. The remaining functions rebuild `J(ξ)` and the `τ0` matrix from
//! explicit Kronecker products, evaluate `ρ(ξ)` through the normal
//! equations, and construct perturbations lying exactly in the perturbation
//! set of a candidate.

use nalgebra::{DMatrix, SVD};
use rand::Rng;
use serde::Serialize;

use crate::backward_error::{rho_at, xi_one};
use crate::error::{check_len, IlseError, Result};
use crate::testgen::{rng_for, streams};
use crate::types::{IlseProblem, IlseSolution, Matrix, PerturbationQuadruple, Vector, WeightScheme};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeResult {
    pub xi_star: Vec<f64>,
    pub rho_star: f64,
    /// Simplex iterations summed over all starts.
    pub iterations: usize,
    pub converged: bool,
    /// Index of the start that produced the best point (0 is `ξ1`).
    pub best_start: usize,
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    /// Evaluation budget per start; `None` means `200·s`.
    pub max_evals: Option<usize>,
    /// Relative spread of simplex values at which a start is converged.
    pub tol: f64,
    /// Extra deterministic starting points, tried after `ξ1`.
    pub starts: Vec<Vector>,
    /// Number of random starts around `ξ1`.
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_evals: None,
            tol: 1e-8,
            starts: Vec::new(),
            random_starts: 2,
            seed: 0,
        }
    }
}

struct NelderMeadOutcome {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder–Mead on `f`, which may fail (`None`) at trial points; failures are
/// treated as `+∞`.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> Option<f64>,
    start: &[f64],
    step: f64,
    max_evals: usize,
    tol: f64,
) -> Option<NelderMeadOutcome> {
    let dim = start.len();
    let eval = |x: &[f64]| f(x).filter(|v| v.is_finite()).unwrap_or(f64::INFINITY);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((start.to_vec(), eval(start)));
    for i in 0..dim {
        let mut x = start.to_vec();
        x[i] += step;
        let fx = eval(&x);
        simplex.push((x, fx));
    }
    let mut evals = dim + 1;
    let mut iterations = 0;
    let mut converged = false;

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if best.is_finite() && worst.is_finite() && (worst - best) <= tol * best.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / dim as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let xr = along(-alpha);
        let fr = eval(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-gamma);
            let fe = eval(&xe);
            evals += 1;
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(-rho);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(rho);
            let fc = eval(&xc);
            (xc, fc)
        };
        evals += 1;
        if fc < worst.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0.clone();
        for (x, fx) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&x0) {
                *xi = bi + sigma * (*xi - bi);
            }
            *fx = eval(x);
        }
        evals += dim;
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    fx.is_finite().then_some(NelderMeadOutcome {
        x,
        f: fx,
        iterations,
        converged,
    })
}

/// Multi-start derivative-free minimization of `ξ ↦ ρ(ξ)`.
///
/// Starts are `ξ1`, then `options.starts`, then random points around `ξ1`.
/// The best point so far never gets worse, so `rho_star ≤ ρ(ξ1)` whenever
/// `ρ(ξ1)` is computable. Ties keep the lower start index.
pub fn minimize_rho(
    problem: &IlseProblem,
    y: &Vector,
    w: &WeightScheme,
    options: &MinimizeOptions,
) -> Result<MinimizeResult> {
    let s = problem.s();
    let xi1 = xi_one(problem, y)?;
    for st in &options.starts {
        check_len("starting multiplier", s, st.len())?;
    }
    let objective = |x: &[f64]| rho_at(problem, y, &Vector::from_row_slice(x), w).ok();

    let mut starts = vec![xi1.clone()];
    starts.extend(options.starts.iter().cloned());
    let mut rng = rng_for(options.seed, streams::CANDIDATE);
    let spread = 1.0 + xi1.amax();
    for _ in 0..options.random_starts {
        starts.push(Vector::from_fn(s, |i, _| {
            xi1[i] + spread * rng.gen_range(-1.0..1.0)
        }));
    }

    let budget = options.max_evals.unwrap_or(200 * s.max(1));
    let mut best: Option<MinimizeResult> = None;
    let mut total_iters = 0;
    for (idx, start) in starts.iter().enumerate() {
        let outcome = if s == 0 {
            objective(&[]).map(|f| NelderMeadOutcome {
                x: Vec::new(),
                f,
                iterations: 0,
                converged: true,
            })
        } else {
            let step = 0.1 * (1.0 + start.amax());
            nelder_mead(&objective, start.as_slice(), step, budget, options.tol)
        };
        let Some(out) = outcome else { continue };
        total_iters += out.iterations;
        let better = best.as_ref().is_none_or(|b| out.f < b.rho_star);
        if better {
            best = Some(MinimizeResult {
                xi_star: out.x,
                rho_star: out.f,
                iterations: 0,
                converged: out.converged,
                best_start: idx,
            });
        }
    }
    let mut best = best.ok_or(IlseError::MinimizationFailed)?;
    best.iterations = total_iters;
    Ok(best)
}

/// Central finite-difference gradient of `ξ ↦ ρ(ξ)` with step `h`.
pub fn rho_gradient_fd(
    problem: &IlseProblem,
    y: &Vector,
    xi: &Vector,
    w: &WeightScheme,
    h: f64,
) -> Result<Vector> {
    let mut grad = Vector::zeros(xi.len());
    for i in 0..xi.len() {
        let mut plus = xi.clone();
        let mut minus = xi.clone();
        plus[i] += h;
        minus[i] -= h;
        grad[i] = (rho_at(problem, y, &plus, w)? - rho_at(problem, y, &minus, w)?) / (2.0 * h);
    }
    Ok(grad)
}

/// Minimum of `ρ(ξ)` over the grid `lo, lo + step, …, hi` for `s = 1`.
pub fn grid_minimum_1d(
    problem: &IlseProblem,
    y: &Vector,
    w: &WeightScheme,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<(f64, f64)> {
    check_len("multiplier (1-D grid)", 1, problem.s())?;
    let count = ((hi - lo) / step).round() as usize;
    let mut best = (f64::NAN, f64::INFINITY);
    for k in 0..=count {
        let xi = lo + k as f64 * step;
        if let Ok(r) = rho_at(problem, y, &Vector::from_element(1, xi), w) {
            if r < best.1 {
                best = (xi, r);
            }
        }
    }
    if best.1.is_finite() {
        Ok(best)
    } else {
        Err(IlseError::MinimizationFailed)
    }
}

fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

fn row(v: &Vector) -> Matrix {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

/// `J(ξ)` built from explicit Kronecker products and a dense `Σ`.
pub fn explicit_j(problem: &IlseProblem, y: &Vector, xi: &Vector, w: &WeightScheme) -> Matrix {
    let (m, n, s) = (problem.m(), problem.n(), problem.s());
    let sig = problem.sig.to_dense();
    let at_sig = problem.a.transpose() * &sig;
    let r = &problem.b - &problem.a * y;
    let top_left = kron(&Matrix::identity(n, n), &(row(&r) * &sig))
        - &at_sig * kron(&row(y), &Matrix::identity(m, m));
    let mid = &at_sig / w.theta1;
    let xi_block = -kron(&Matrix::identity(n, n), &row(xi)) / w.theta2;
    let y_block = kron(&row(y), &Matrix::identity(s, s)) / w.theta2;
    let g_block = -Matrix::identity(s, s) / w.theta3;

    let cols = n * m + m + n * s + s;
    let mut j = Matrix::zeros(n + s, cols);
    j.view_mut((0, 0), (n, n * m)).copy_from(&top_left);
    j.view_mut((0, n * m), (n, m)).copy_from(&mid);
    j.view_mut((0, n * m + m), (n, n * s)).copy_from(&xi_block);
    j.view_mut((n, n * m + m), (s, n * s)).copy_from(&y_block);
    j.view_mut((n, n * m + m + n * s), (s, s)).copy_from(&g_block);
    j
}

/// The `ξ`-free matrix whose pseudoinverse norm defines `τ0`: `J(ξ)` with
/// its third column block set to zero.
pub fn explicit_tau0_matrix(problem: &IlseProblem, y: &Vector, w: &WeightScheme) -> Matrix {
    let (m, n, s) = (problem.m(), problem.n(), problem.s());
    let mut mat = explicit_j(problem, y, &Vector::zeros(s), w);
    mat.view_mut((0, n * m + m), (n + s, n * s)).fill(0.0);
    mat
}

/// `‖M†‖₂` from a full SVD of `M`: the reciprocal of its smallest nonzero
/// singular value.
pub fn pinv_norm_svd(mat: &Matrix) -> f64 {
    let svd = SVD::new(mat.clone(), false, false);
    let sv = &svd.singular_values;
    let tol = sv.max() * (mat.nrows().max(mat.ncols()) as f64) * f64::EPSILON;
    sv.iter()
        .filter(|&&x| x > tol)
        .fold(f64::INFINITY, |acc, &x| acc.min(x))
        .recip()
}

/// `ρ(ξ)` via `‖z‖² = rhsᵀ (J Jᵀ)⁻¹ rhs`.
pub fn rho_normal_equations(j: &Matrix, rhs: &Vector) -> Option<f64> {
    let gram = j * j.transpose();
    let sol = gram.cholesky()?.solve(rhs);
    Some(rhs.dot(&sol).max(0.0).sqrt())
}

/// A candidate `y = x + offset` and a perturbation `(E, f, F, g)` that
/// satisfies the perturbed optimality conditions at `y` with the
/// unperturbed multiplier `ξ0` exactly (up to round-off):
///
/// ```text
/// (A+E)ᵀΣ(b + f − (A+E)y) = (B+F)ᵀ ξ0,   (B+F) y = d + g.
/// ```
///
/// `E` and `F` are Gaussian with scale `eps`; `g` follows from the second
/// equation and `f` is the minimum-norm solution of the first.
pub fn feasible_perturbation(
    problem: &IlseProblem,
    solution: &IlseSolution,
    offset: &Vector,
    eps: f64,
    seed: u64,
) -> Result<(Vector, PerturbationQuadruple)> {
    check_len("offset", problem.n(), offset.len())?;
    let base = crate::testgen::gen_perturbation(problem, eps, seed)?;
    let y = &solution.x + offset;
    let a_pert = &problem.a + &base.e;
    let b_pert = &problem.constraint + &base.f_mat;

    let g = &b_pert * &y - &problem.d;

    // (A+E)ᵀΣ f = (B+F)ᵀξ0 − (A+E)ᵀΣ(b − (A+E)y)
    let mut sigma_ap = a_pert.clone();
    sigma_ap
        .rows_mut(problem.sig.p, problem.sig.q)
        .neg_mut();
    let r = &problem.b - &a_pert * &y;
    let target = b_pert.tr_mul(&solution.xi) - sigma_ap.tr_mul(&r);
    let op = sigma_ap.transpose();
    let f = crate::linalg::min_norm_solve("(A+E)ᵀΣ", &op, &target, 1e-13)?.z;

    Ok((
        y,
        PerturbationQuadruple {
            e: base.e,
            f,
            f_mat: base.f_mat,
            g,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward_error::{assemble_j, rhs_vector};
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

    #[test]
    fn nelder_mead_on_a_quadratic() {
        let f = |x: &[f64]| Some((x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + 0.5);
        let out = nelder_mead(&f, &[0.0, 0.0], 0.5, 2000, 1e-14).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-5);
        assert!((out.x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn nelder_mead_skips_failed_points() {
        let f = |x: &[f64]| (x[0] > -0.5).then(|| (x[0] - 2.0).powi(2));
        let out = nelder_mead(&f, &[0.0], 1.0, 500, 1e-12).unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-4);
        let never = |_: &[f64]| None;
        assert!(nelder_mead(&never, &[0.0], 1.0, 50, 1e-12).is_none());
    }

    #[test]
    fn exact_solution_gives_zero() {
        let res = minimize_rho(&t1(), &Vector::from_element(1, 0.0), &WeightScheme::unit(), &MinimizeOptions::default()).unwrap();
        assert_eq!(res.rho_star, 0.0);
        assert!((res.xi_star[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn t1_matches_grid() {
        let w = WeightScheme::unit();
        let y = Vector::from_element(1, 0.1);
        let (gxi, grho) = grid_minimum_1d(&t1(), &y, &w, 0.0, 2.0, 1e-4).unwrap();
        let res = minimize_rho(&t1(), &y, &w, &MinimizeOptions::default()).unwrap();
        assert!((res.rho_star - grho).abs() < 1e-3);
        assert!(res.rho_star <= rho_at(&t1(), &y, &Vector::from_element(1, 0.9), &w).unwrap());
        // stationarity at the grid minimizer
        let h = 1e-4;
        let g = rho_gradient_fd(&t1(), &y, &Vector::from_element(1, gxi), &w, h).unwrap();
        assert!(g[0].abs() <= 10.0 * h, "{g}");
    }

    #[test]
    fn explicit_j_matches_assembled_j() {
        let p = t1();
        let w = WeightScheme::new(0.5, 2.0, 3.0).unwrap();
        let y = Vector::from_element(1, 0.3);
        let xi = Vector::from_element(1, -0.7);
        let j = assemble_j(&p, &y, &xi, &w).unwrap().j;
        assert!((j - explicit_j(&p, &y, &xi, &w)).amax() < 1e-15);
    }

    #[test]
    fn normal_equation_oracle_on_t1() {
        let p = t1();
        let w = WeightScheme::unit();
        let y = Vector::from_element(1, 0.1);
        let xi = Vector::from_element(1, 0.9);
        let j = explicit_j(&p, &y, &xi, &w);
        let rhs = rhs_vector(&p, &y, &xi).unwrap();
        let r = rho_normal_equations(&j, &rhs).unwrap();
        assert!((r - 0.099620).abs() < 1e-5);
    }

    #[test]
    fn feasible_perturbation_satisfies_conditions() {
        let (p, _) = crate::testgen::gen_ilse_instance(&crate::testgen::random_small_params(3, 10, 5, 3)).unwrap();
        let sol = crate::solver::solve_ilse(&p).unwrap();
        let offset = crate::testgen::gen_gaussian_vector(p.n(), 1e-3, 5);
        let (y, pert) = feasible_perturbation(&p, &sol, &offset, 1e-3, 8).unwrap();
        let pp = p.perturbed(&pert).unwrap();
        let (r1, r2) = crate::solver::normal_equation_residuals(&pp, &y, &sol.xi).unwrap();
        assert!(r1.amax() < 1e-12, "{r1}");
        assert!(r2.amax() < 1e-12, "{r2}");
    }
}
