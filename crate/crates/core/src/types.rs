//! Problem data, solutions, perturbations and the signature matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, IlseError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// The diagonal matrix `diag(I_p, -I_q)`.
///
/// Only the pair `(p, q)` is stored; products with the matrix are sign flips
/// of the trailing `q` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureMatrix {
    pub p: usize,
    pub q: usize,
}

impl SignatureMatrix {
    pub fn new(p: usize, q: usize) -> Self {
        SignatureMatrix { p, q }
    }

    /// Order of the matrix, `p + q`.
    pub fn dim(&self) -> usize {
        self.p + self.q
    }

    /// Diagonal entry `i` (+1 or -1).
    #[inline]
    pub fn sign(&self, i: usize) -> f64 {
        if i < self.p {
            1.0
        } else {
            -1.0
        }
    }

    /// Returns `Σ v`.
    pub fn apply(&self, v: &Vector) -> Result<Vector> {
        check_len("signature product", self.dim(), v.len())?;
        let mut out = v.clone();
        self.apply_in_place(out.as_mut_slice());
        Ok(out)
    }

    pub(crate) fn apply_in_place(&self, v: &mut [f64]) {
        for x in &mut v[self.p..] {
            *x = -*x;
        }
    }

    /// Returns `Σ M`, negating the trailing `q` rows.
    pub fn apply_rows(&self, mat: &Matrix) -> Result<Matrix> {
        check_len("signature row product", self.dim(), mat.nrows())?;
        let mut out = mat.clone();
        let q = self.q;
        let p = self.p;
        out.rows_mut(p, q).neg_mut();
        Ok(out)
    }

    /// Dense `m × m` form. Only used by tests and verification code.
    pub fn to_dense(&self) -> Matrix {
        Matrix::from_fn(self.dim(), self.dim(), |i, j| {
            if i == j {
                self.sign(i)
            } else {
                0.0
            }
        })
    }
}

/// Weights `(θ1, θ2, θ3)` on `f`, `F` and `g` in the backward-error norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl WeightScheme {
    pub fn new(theta1: f64, theta2: f64, theta3: f64) -> Result<Self> {
        let w = WeightScheme {
            theta1,
            theta2,
            theta3,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn unit() -> Self {
        WeightScheme {
            theta1: 1.0,
            theta2: 1.0,
            theta3: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = [self.theta1, self.theta2, self.theta3];
        if t.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(IlseError::InvalidWeight(t))
        }
    }
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme::unit()
    }
}

/// `min (b - Ax)ᵀ Σ (b - Ax)` subject to `Bx = d`.
#[derive(Debug, Clone, PartialEq)]
pub struct IlseProblem {
    /// `m × n` least squares matrix.
    pub a: Matrix,
    /// Length `m` right-hand side.
    pub b: Vector,
    /// `s × n` constraint matrix `B`.
    pub constraint: Matrix,
    /// Length `s` constraint right-hand side.
    pub d: Vector,
    pub sig: SignatureMatrix,
}

impl IlseProblem {
    pub fn new(
        a: Matrix,
        b: Vector,
        constraint: Matrix,
        d: Vector,
        sig: SignatureMatrix,
    ) -> Result<Self> {
        let problem = IlseProblem {
            a,
            b,
            constraint,
            d,
            sig,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn s(&self) -> usize {
        self.constraint.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.a.shape();
        check_len("b", m, self.b.len())?;
        check_len("signature order", m, self.sig.dim())?;
        check_len("columns of B", n, self.constraint.ncols())?;
        check_len("d", self.constraint.nrows(), self.d.len())?;
        if m < n {
            return Err(IlseError::InvalidInput(format!(
                "A must have at least as many rows as columns (m = {m}, n = {n})"
            )));
        }
        if self.s() > n {
            return Err(IlseError::InvalidInput(format!(
                "B has more rows than columns (s = {}, n = {n})",
                self.s()
            )));
        }
        let finite = self.a.iter().all(|x| x.is_finite())
            && self.b.iter().all(|x| x.is_finite())
            && self.constraint.iter().all(|x| x.is_finite())
            && self.d.iter().all(|x| x.is_finite());
        if !finite {
            return Err(IlseError::InvalidInput("non-finite entry".into()));
        }
        Ok(())
    }

    /// `r_y = b - A y`.
    pub fn residual(&self, y: &Vector) -> Result<Vector> {
        check_len("candidate solution", self.n(), y.len())?;
        Ok(&self.b - &self.a * y)
    }

    /// `Aᵀ Σ v` for a length-`m` vector `v`.
    pub(crate) fn at_sigma(&self, v: &Vector) -> Vector {
        let mut sv = v.clone();
        self.sig.apply_in_place(sv.as_mut_slice());
        self.a.tr_mul(&sv)
    }

    /// `Σ A`.
    pub(crate) fn sigma_a(&self) -> Matrix {
        let mut sa = self.a.clone();
        sa.rows_mut(self.sig.p, self.sig.q).neg_mut();
        sa
    }

    /// Adds `pert` to the data, returning `(A+E, b+f, B+F, d+g)`.
    pub fn perturbed(&self, pert: &PerturbationQuadruple) -> Result<IlseProblem> {
        pert.check_conforms(self)?;
        IlseProblem::new(
            &self.a + &pert.e,
            &self.b + &pert.f,
            &self.constraint + &pert.f_mat,
            &self.d + &pert.g,
            self.sig,
        )
    }
}

/// Solution of an ILSE problem together with the augmented-system unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct IlseSolution {
    pub x: Vector,
    /// Lagrange multipliers `ξ` of the normal equations.
    pub xi: Vector,
    /// `λ = -ξ`, as it appears in the augmented system.
    pub lambda: Vector,
    /// `r = b - A x`.
    pub r: Vector,
    /// `Σ r`.
    pub s_vec: Vector,
}

/// Perturbations `(E, f, F, g)` of `(A, b, B, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationQuadruple {
    pub e: Matrix,
    pub f: Vector,
    /// Perturbation of the constraint matrix.
    pub f_mat: Matrix,
    pub g: Vector,
}

impl PerturbationQuadruple {
    pub fn zeros(problem: &IlseProblem) -> Self {
        let (m, n, s) = (problem.m(), problem.n(), problem.s());
        PerturbationQuadruple {
            e: Matrix::zeros(m, n),
            f: Vector::zeros(m),
            f_mat: Matrix::zeros(s, n),
            g: Vector::zeros(s),
        }
    }

    pub fn check_conforms(&self, problem: &IlseProblem) -> Result<()> {
        check_len("rows of E", problem.m(), self.e.nrows())?;
        check_len("columns of E", problem.n(), self.e.ncols())?;
        check_len("f", problem.m(), self.f.len())?;
        check_len("rows of F", problem.s(), self.f_mat.nrows())?;
        check_len("columns of F", problem.n(), self.f_mat.ncols())?;
        check_len("g", problem.s(), self.g.len())
    }

    pub fn scaled(&self, c: f64) -> Self {
        PerturbationQuadruple {
            e: &self.e * c,
            f: &self.f * c,
            f_mat: &self.f_mat * c,
            g: &self.g * c,
        }
    }
}

/// Frobenius norm of `[E, θ1 f; θ2 F, θ3 g]`.
pub fn weighted_perturbation_norm(pert: &PerturbationQuadruple, w: &WeightScheme) -> Result<f64> {
    w.validate()?;
    check_len("rows of f", pert.e.nrows(), pert.f.len())?;
    check_len("rows of g", pert.f_mat.nrows(), pert.g.len())?;
    check_len("columns of F", pert.e.ncols(), pert.f_mat.ncols())?;
    let parts = [
        pert.e.norm(),
        w.theta1 * pert.f.norm(),
        w.theta2 * pert.f_mat.norm(),
        w.theta3 * pert.g.norm(),
    ];
    Ok(hypot_all(&parts))
}

/// Overflow-safe `sqrt(sum x_i^2)`.
pub(crate) fn hypot_all(parts: &[f64]) -> f64 {
    parts.iter().fold(0.0_f64, |acc, x| acc.hypot(*x))
}
