//! Seeded generation of test problems with prescribed conditioning.
//!
//! `A = Q D U` with `Q` Σ-orthogonal (`QᵀΣQ = Σ`), `D` a geometric
//! singular-value ladder and `U` random orthogonal, normalized to
//! `‖A‖₂ = 1`. `B` is built the same way from orthogonal factors only, so
//! its condition number is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{IlseError, Result};
use crate::linalg::{extreme_singular_values, spectral_norm};
use crate::solver::check_well_posedness_default;
use crate::types::{IlseProblem, Matrix, PerturbationQuadruple, SignatureMatrix, Vector};

/// Stream identifiers, xor-ed into a seed to derive independent generators.
pub mod streams {
    pub const SIGMA_ORTHOGONAL: u64 = 0x5167_0000_0000_0001;
    pub const RIGHT_ORTHOGONAL: u64 = 0x5167_0000_0000_0002;
    pub const CONSTRAINT: u64 = 0x5167_0000_0000_0003;
    pub const VECTORS: u64 = 0x5167_0000_0000_0004;
    pub const PERTURBATION: u64 = 0x5167_0000_0000_0005;
    pub const RETRY: u64 = 0x5167_0000_0000_0006;
    pub const CANDIDATE: u64 = 0x5167_0000_0000_0007;
}

pub const DEFAULT_HYPER_BOUND: f64 = 1.0;
const MAX_ATTEMPTS: u64 = 10;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream)
}

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    // Fill column-major explicitly so the stream order is fixed.
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub p: usize,
    pub q: usize,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub seed: u64,
    pub hyper_bound: f64,
}

impl GenParams {
    /// Dimensions `(m, n, s, p, q) = (100, 50, 20, 60, 40)`.
    pub fn benchmark_scale(kappa_a: f64, kappa_b: f64, seed: u64) -> Self {
        GenParams {
            m: 100,
            n: 50,
            s: 20,
            p: 60,
            q: 40,
            kappa_a,
            kappa_b,
            seed,
            hyper_bound: DEFAULT_HYPER_BOUND,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IlseError::InvalidInput(msg));
        if self.p + self.q != self.m {
            return bad(format!("p + q = {} differs from m = {}", self.p + self.q, self.m));
        }
        if self.m < self.n {
            return bad(format!("m = {} is smaller than n = {}", self.m, self.n));
        }
        if self.s > self.n {
            return bad(format!("s = {} exceeds n = {}", self.s, self.n));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.kappa_a >= 1.0) || !(self.kappa_b >= 1.0) {
            return bad(format!(
                "condition parameters must be >= 1 (kappa_A = {}, kappa_B = {})",
                self.kappa_a, self.kappa_b
            ));
        }
        if !(self.hyper_bound >= 0.0) || !self.hyper_bound.is_finite() {
            return bad(format!("hyper_bound must be finite and >= 0, got {}", self.hyper_bound));
        }
        Ok(())
    }
}

/// Random orthogonal matrix: `n − 1` Householder reflectors with Gaussian
/// directions and a random ±1 diagonal, applied to the identity.
pub fn gen_random_orthogonal(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Matrix::identity(n, n);
    for i in 0..n {
        if rng.gen::<bool>() {
            q.row_mut(i).neg_mut();
        }
    }
    for k in (0..n.saturating_sub(1)).rev() {
        let len = n - k;
        let mut v = gaussian_vector(&mut rng, len);
        let alpha = v.norm();
        if alpha == 0.0 {
            continue;
        }
        // v ← x + sign(x0)‖x‖e0, H = I − 2vvᵀ/vᵀv, applied from the left
        v[0] += alpha.copysign(v[0]);
        let vtv = v.norm_squared();
        let mut block = q.rows_mut(k, len);
        let w = block.tr_mul(&v) * (2.0 / vtv);
        block.ger(-1.0, &v, &w, 1.0);
    }
    q
}

/// Σ-orthogonal `(p+q) × (p+q)` matrix: `diag(U_p, U_q) · H · diag(V_p, V_q)`
/// where `H` is a product of `min(p, q)` hyperbolic rotations on disjoint
/// random `(i ≤ p, j > p)` planes with angles uniform in
/// `[−hyper_bound, hyper_bound]`.
pub fn gen_sigma_orthogonal(p: usize, q: usize, seed: u64, hyper_bound: f64) -> Matrix {
    let m = p + q;
    let mut rng = rng_for(seed, streams::SIGMA_ORTHOGONAL);
    let block_diag = |rng: &mut ChaCha8Rng| {
        let mut out = Matrix::zeros(m, m);
        out.view_mut((0, 0), (p, p))
            .copy_from(&gen_random_orthogonal(p, rng.gen()));
        out.view_mut((p, p), (q, q))
            .copy_from(&gen_random_orthogonal(q, rng.gen()));
        out
    };
    let left = block_diag(&mut rng);
    let right = block_diag(&mut rng);

    let mut pos: Vec<usize> = (0..p).collect();
    let mut neg: Vec<usize> = (p..m).collect();
    shuffle(&mut pos, &mut rng);
    shuffle(&mut neg, &mut rng);

    let mut h = right;
    for (&i, &j) in pos.iter().zip(neg.iter()) {
        let t = if hyper_bound > 0.0 {
            rng.gen_range(-hyper_bound..=hyper_bound)
        } else {
            0.0
        };
        let (c, s) = (t.cosh(), t.sinh());
        for col in 0..m {
            let (hi, hj) = (h[(i, col)], h[(j, col)]);
            h[(i, col)] = c * hi + s * hj;
            h[(j, col)] = s * hi + c * hj;
        }
    }
    left * h
}

fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

/// `rows × cols` matrix with diagonal `κ^(−(i−1)/(cols−1))`, `i = 1..cols`.
pub fn gen_geometric_diagonal(rows: usize, cols: usize, kappa: f64) -> Result<Matrix> {
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(IlseError::InvalidInput(format!(
            "kappa must be finite and >= 1, got {kappa}"
        )));
    }
    if cols == 0 || rows < cols {
        return Err(IlseError::InvalidInput(format!(
            "geometric diagonal needs rows >= cols >= 1, got {rows} x {cols}"
        )));
    }
    let mut d = Matrix::zeros(rows, cols);
    for i in 0..cols {
        d[(i, i)] = if i == 0 {
            1.0
        } else if i == cols - 1 {
            1.0 / kappa
        } else {
            kappa.powf(-(i as f64) / (cols - 1) as f64)
        };
    }
    Ok(d)
}

/// `s × n` matrix `U_s [diag(ladder) 0] V_nᵀ` with unit spectral norm and
/// condition number `kappa`.
pub fn gen_conditioned_matrix(s: usize, n: usize, kappa: f64, seed: u64) -> Result<Matrix> {
    if s > n {
        return Err(IlseError::InvalidInput(format!("s = {s} exceeds n = {n}")));
    }
    if s == 0 {
        return Ok(Matrix::zeros(0, n));
    }
    let d = gen_geometric_diagonal(n, s, kappa)?.transpose();
    let mut rng = rng_for(seed, streams::CONSTRAINT);
    let u = gen_random_orthogonal(s, rng.gen());
    let v = gen_random_orthogonal(n, rng.gen());
    Ok(u * d * v.transpose())
}

/// Generates a well-posed instance and its achieved `κ(A) = σ_max / σ_min`.
///
/// Instances that fail the well-posedness test are regenerated from derived
/// seeds, up to ten attempts.
pub fn gen_ilse_instance(params: &GenParams) -> Result<(IlseProblem, f64)> {
    params.validate()?;
    let mut last = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        let seed = if attempt == 0 {
            params.seed
        } else {
            params.seed ^ streams::RETRY.wrapping_mul(attempt)
        };
        let (problem, kappa) = gen_instance_once(params, seed)?;
        let report = check_well_posedness_default(&problem);
        if report.is_well_posed() {
            return Ok((problem, kappa));
        }
        last = format!("{report:?}");
    }
    Err(IlseError::NotWellPosed(format!(
        "no well-posed instance after {MAX_ATTEMPTS} attempts (last: {last})"
    )))
}

fn gen_instance_once(params: &GenParams, seed: u64) -> Result<(IlseProblem, f64)> {
    let GenParams { m, n, s, p, q, .. } = *params;
    let qmat = gen_sigma_orthogonal(p, q, seed, params.hyper_bound);
    let d = gen_geometric_diagonal(m, n, params.kappa_a)?;
    let u = gen_random_orthogonal(n, seed ^ streams::RIGHT_ORTHOGONAL);
    let mut a = qmat * d * u;
    let norm = spectral_norm(&a);
    a /= norm;
    let (smin, smax) = extreme_singular_values(&a);

    let constraint = gen_conditioned_matrix(s, n, params.kappa_b, seed)?;
    let mut rng = rng_for(seed, streams::VECTORS);
    let b = gaussian_vector(&mut rng, m);
    let dvec = gaussian_vector(&mut rng, s);
    let problem = IlseProblem::new(a, b, constraint, dvec, SignatureMatrix::new(p, q))?;
    Ok((problem, smax / smin))
}

/// `E = ε G1`, `f = ε ‖b‖₂ g2`, `F = ε G3`, `g = ε ‖d‖₂ g4` with standard
/// Gaussian `G1, g2, G3, g4`.
pub fn gen_perturbation(problem: &IlseProblem, eps: f64, seed: u64) -> Result<PerturbationQuadruple> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(IlseError::InvalidInput(format!("eps must be finite and >= 0, got {eps}")));
    }
    let (m, n, s) = (problem.m(), problem.n(), problem.s());
    let mut rng = rng_for(seed, streams::PERTURBATION);
    let e = gaussian_matrix(&mut rng, m, n) * eps;
    let f = gaussian_vector(&mut rng, m) * (eps * problem.b.norm());
    let f_mat = gaussian_matrix(&mut rng, s, n) * eps;
    let g = gaussian_vector(&mut rng, s) * (eps * problem.d.norm());
    Ok(PerturbationQuadruple { e, f, f_mat, g })
}

/// Small random dimensions for property checks: `n ≤ max_n`,
/// `s ≤ min(n, max_s)`, `n ≤ m ≤ max_m`, `p ≥ n` so `AᵀΣA` stays definite.
pub fn random_small_params(seed: u64, max_m: usize, max_n: usize, max_s: usize) -> GenParams {
    let mut rng = rng_for(seed, 0);
    let n = rng.gen_range(1..=max_n);
    let s = rng.gen_range(1..=n.min(max_s));
    let m = rng.gen_range(n..=max_m.max(n));
    let p = rng.gen_range(n..=m);
    let kappa_a = 10f64.powf(rng.gen_range(0.0..3.0));
    let kappa_b = 10f64.powf(rng.gen_range(0.0..3.0));
    GenParams {
        m,
        n,
        s,
        p,
        q: m - p,
        kappa_a,
        kappa_b,
        seed,
        hyper_bound: DEFAULT_HYPER_BOUND,
    }
}

/// Gaussian vector of length `len` scaled by `scale`, for candidate offsets.
pub fn gen_gaussian_vector(len: usize, scale: f64, seed: u64) -> Vector {
    let mut rng = rng_for(seed, streams::CANDIDATE);
    gaussian_vector(&mut rng, len) * scale
}
