//! Property suite run by `ilse verify`: every invariant of the solver, the
//! backward-error machinery, the oracles and the generators, checked on
//! seeded random instances.

use std::fmt::Write as _;

use serde::Serialize;

use crate::backward_error::{
    alpha_lower_bound, alpha_with, assemble_j, bound_scale, linearized_solution,
    lower_bound_map, rho_at, rhs_vector, solution_distance_lower_bound, tau_at, tau_zero,
    xi_one, AssemblyFault, RANK_TOLERANCE,
};
use crate::harness::{format_csv, mu_one, parse_csv, run_experiment, trial_seed, ExperimentConfig};
use crate::linalg::extreme_singular_values;
use crate::oracle::{
    explicit_j, explicit_tau0_matrix, feasible_perturbation, minimize_rho, pinv_norm_svd,
    MinimizeOptions,
};
use crate::solver::{
    assemble_augmented, normal_equation_residuals, relative_augmented_residual, solve_ilse,
};
use crate::testgen::{
    gen_gaussian_vector, gen_geometric_diagonal, gen_ilse_instance, gen_perturbation,
    gen_random_orthogonal, gen_sigma_orthogonal, random_small_params,
};
use crate::types::{
    weighted_perturbation_norm, IlseProblem, IlseSolution, Matrix, SignatureMatrix, Vector,
    WeightScheme,
};

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Random well-posed instances per property.
    pub instances: usize,
    pub seed: u64,
    pub max_m: usize,
    pub max_n: usize,
    pub max_s: usize,
    /// Flips the sign of the `AᵀΣ(yᵀ⊗I)` term in the library's `α` path, to
    /// check that the suite notices.
    #[doc(hidden)]
    pub inject_fault: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            instances: 20,
            seed: 1,
            max_m: 12,
            max_n: 6,
            max_s: 3,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyStatus {
    Passed,
    Failed,
    /// Every case was skipped because the property's hypothesis never held.
    PreconditionUnmet,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
    /// Cases skipped because the hypothesis did not hold.
    pub skipped: usize,
    pub first_failure: Option<String>,
}

impl PropertyResult {
    fn new(name: &'static str) -> Self {
        PropertyResult {
            name,
            passed: 0,
            failed: 0,
            skipped: 0,
            first_failure: None,
        }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(detail());
            }
        }
    }

    fn error(&mut self, err: impl std::fmt::Display) {
        self.check(false, || err.to_string());
    }

    pub fn status(&self) -> PropertyStatus {
        if self.failed > 0 {
            PropertyStatus::Failed
        } else if self.passed == 0 && self.skipped > 0 {
            PropertyStatus::PreconditionUnmet
        } else {
            PropertyStatus::Passed
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(|p| p.failed == 0)
    }

    pub fn failures(&self) -> Vec<&PropertyResult> {
        self.properties.iter().filter(|p| p.failed > 0).collect()
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn format_text(&self) -> String {
        let mut out = String::new();
        for p in &self.properties {
            let status = match p.status() {
                PropertyStatus::Passed => "PASS",
                PropertyStatus::Failed => "FAIL",
                PropertyStatus::PreconditionUnmet => "SKIP (precondition unmet)",
            };
            let _ = write!(
                out,
                "{status:<5} {:<34} passed {:>4}  failed {:>3}  skipped {:>3}",
                p.name, p.passed, p.failed, p.skipped
            );
            if let Some(f) = &p.first_failure {
                let _ = write!(out, "  first failure: {f}");
            }
            out.push('\n');
        }
        out
    }
}

struct Case {
    problem: IlseProblem,
    solution: IlseSolution,
    /// `x + offset`, a candidate with `r_y ≠ 0`.
    y: Vector,
    seed: u64,
}

fn cases(cfg: &VerifyConfig) -> Vec<Case> {
    (0..cfg.instances as u64)
        .filter_map(|i| {
            let seed = trial_seed(cfg.seed, i);
            let params = random_small_params(seed, cfg.max_m, cfg.max_n, cfg.max_s);
            let (problem, _) = gen_ilse_instance(&params).ok()?;
            let solution = solve_ilse(&problem).ok()?;
            let scale = 1e-3 * (1.0 + solution.x.norm());
            let y = &solution.x + gen_gaussian_vector(problem.n(), scale, seed);
            Some(Case {
                problem,
                solution,
                y,
                seed,
            })
        })
        .collect()
}

/// A problem with `b = A x0`, so `r_y = 0` at `y = x0`.
fn consistent_case(seed: u64) -> Option<(IlseProblem, Vector)> {
    let params = random_small_params(seed, 8, 4, 2);
    let (p, _) = gen_ilse_instance(&params).ok()?;
    let x0 = gen_gaussian_vector(p.n(), 1.0, seed);
    let b = &p.a * &x0;
    let d = &p.constraint * &x0;
    let problem = IlseProblem::new(p.a, b, p.constraint, d, p.sig).ok()?;
    Some((problem, x0))
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn verify_suite(cfg: &VerifyConfig) -> VerifyReport {
    let fault = if cfg.inject_fault {
        AssemblyFault::FlippedCrossTerm
    } else {
        AssemblyFault::None
    };
    let cases = cases(cfg);
    let w = WeightScheme::unit();
    let mut props = Vec::new();

    // core
    let mut p = PropertyResult::new("signature_involution");
    for c in &cases {
        let sig = c.problem.sig;
        let v = gen_gaussian_vector(sig.dim(), 10.0, c.seed);
        let back = sig.apply(&sig.apply(&v).unwrap()).unwrap();
        p.check(back == v, || format!("seed {}", c.seed));
    }
    props.push(p);

    let mut p = PropertyResult::new("weighted_norm_identity");
    for c in &cases {
        let pert = gen_perturbation(&c.problem, 1.0, c.seed).unwrap();
        let w3 = WeightScheme::new(0.3, 2.0, 5.0).unwrap();
        let nrm = weighted_perturbation_norm(&pert, &w3).unwrap();
        let sq = pert.e.norm_squared()
            + 0.09 * pert.f.norm_squared()
            + 4.0 * pert.f_mat.norm_squared()
            + 25.0 * pert.g.norm_squared();
        let scaled = weighted_perturbation_norm(&pert.scaled(-3.0), &w3).unwrap();
        p.check(
            rel_diff(nrm * nrm, sq) < 1e-12 && rel_diff(scaled, 3.0 * nrm) < 1e-12,
            || format!("seed {}: {nrm} vs {}", c.seed, sq.sqrt()),
        );
    }
    props.push(p);

    // solver
    let mut sym = PropertyResult::new("augmented_symmetry");
    let mut resid = PropertyResult::new("augmented_residual");
    let mut normal = PropertyResult::new("normal_equations");
    let mut determinism = PropertyResult::new("solve_determinism");
    for c in &cases {
        let (k, _) = assemble_augmented(&c.problem).unwrap();
        sym.check(k == k.transpose(), || format!("seed {}", c.seed));
        match relative_augmented_residual(&c.problem, &c.solution) {
            Ok(g) => resid.check(g <= 1e-12, || format!("seed {}: gamma = {g:e}", c.seed)),
            Err(e) => resid.error(e),
        }
        let (r1, r2) = normal_equation_residuals(&c.problem, &c.solution.x, &c.solution.xi).unwrap();
        let bound = 1e-10 * (c.problem.a.norm() * c.problem.b.norm() + c.problem.constraint.norm());
        let got = r1.norm().hypot(r2.norm());
        normal.check(got <= bound, || format!("seed {}: {got:e} > {bound:e}", c.seed));
        let again = solve_ilse(&c.problem).unwrap();
        determinism.check(again == c.solution, || format!("seed {}", c.seed));
    }
    props.extend([sym, resid, normal, determinism]);

    // backward error
    let mut kron = PropertyResult::new("j_matches_kronecker_form");
    let mut full_rank = PropertyResult::new("j_full_row_rank");
    let mut min_norm = PropertyResult::new("min_norm_consistency");
    let mut xi1_opt = PropertyResult::new("xi1_minimizes_rhs");
    let mut tau_bound = PropertyResult::new("tau_below_tau0");
    let mut tau0_eq = PropertyResult::new("tau0_equivalence");
    let mut alpha_thm = PropertyResult::new("alpha_lower_bound");
    let mut lower = PropertyResult::new("lower_bound_consistency");
    let mut distance = PropertyResult::new("distance_lower_bound");
    for c in &cases {
        let (problem, y) = (&c.problem, &c.y);
        let xis: Vec<Vector> = (0..10u64)
            .map(|k| gen_gaussian_vector(problem.s(), 1.0 + c.solution.xi.amax(), c.seed ^ (k + 1)))
            .collect();

        let j = assemble_j(problem, y, &xis[0], &w).unwrap().j;
        let jk = explicit_j(problem, y, &xis[0], &w);
        let diff = (&j - &jk).amax() / jk.amax().max(1.0);
        kron.check(diff <= 1e-14, || format!("seed {}: {diff:e}", c.seed));

        let r_y = problem.residual(y).unwrap();
        for xi in &xis {
            if r_y.amax() == 0.0 {
                full_rank.skipped += 1;
                continue;
            }
            let j = assemble_j(problem, y, xi, &w).unwrap().j;
            let (smin, smax) = extreme_singular_values(&j);
            full_rank.check(smin > RANK_TOLERANCE * smax, || {
                format!("seed {}: sigma_min {smin:e}, sigma_max {smax:e}", c.seed)
            });
        }

        match linearized_solution(problem, y, &xis[1], &w) {
            Ok(sol) => {
                let op = assemble_j(problem, y, &xis[1], &w).unwrap();
                let rhs = rhs_vector(problem, y, &xis[1]).unwrap();
                let res = (&op.j * &sol.z - &rhs).norm();
                let tol = 1e-10 * (op.j.norm() * sol.z.norm() + rhs.norm());
                // z + (I − J†J)v is another solution and must be no shorter
                let v = gen_gaussian_vector(op.ncols(), 1.0, c.seed);
                let gram = &op.j * op.j.transpose();
                let proj = op.j.tr_mul(&gram.lu().solve(&(&op.j * &v)).unwrap());
                let other = &sol.z + (&v - proj);
                min_norm.check(res <= tol && sol.z.norm() <= other.norm() * (1.0 + 1e-12), || {
                    format!("seed {}: residual {res:e} (tol {tol:e})", c.seed)
                });
            }
            Err(e) => min_norm.error(e),
        }

        match xi_one(problem, y) {
            Ok(xi1) => {
                let base = rhs_vector(problem, y, &xi1).unwrap().norm();
                for xi in &xis {
                    let other = rhs_vector(problem, y, xi).unwrap().norm();
                    xi1_opt.check(base <= other * (1.0 + 1e-12), || {
                        format!("seed {}: {base:e} > {other:e}", c.seed)
                    });
                }
            }
            Err(e) => xi1_opt.error(e),
        }

        match tau_zero(problem, y, &w) {
            Ok(tau0) => {
                for xi in &xis {
                    match tau_at(problem, y, xi, &w) {
                        Ok(t) => tau_bound.check(t <= tau0 * (1.0 + 1e-10), || {
                            format!("seed {}: tau {t:e} > tau0 {tau0:e}", c.seed)
                        }),
                        Err(e) => tau_bound.error(e),
                    }
                }
            }
            Err(e) => tau_bound.error(e),
        }

        for theta1 in [0.1, 1.0, 10.0] {
            // a small θ3 keeps the 1/α branch active in τ0 = max(θ3, 1/α)
            let wt = WeightScheme::new(theta1, 1.0, 1e-3).unwrap();
            match alpha_with(problem, y, &wt, fault) {
                Ok(a) => {
                    let formula = wt.theta3.max(1.0 / a);
                    let direct = pinv_norm_svd(&explicit_tau0_matrix(problem, y, &wt));
                    tau0_eq.check(rel_diff(formula, direct) <= 1e-8, || {
                        format!("seed {}, theta1 {theta1}: {formula:e} vs {direct:e}", c.seed)
                    });
                    let lb = alpha_lower_bound(problem, y, &wt).unwrap();
                    alpha_thm.check(a >= lb * (1.0 - 1e-12), || {
                        format!("seed {}, theta1 {theta1}: alpha {a:e} < {lb:e}", c.seed)
                    });
                }
                Err(e) => tau0_eq.error(e),
            }
        }

        // A perturbation in the perturbation set of y with multiplier ξ0.
        let offset = gen_gaussian_vector(problem.n(), 1e-4 * (1.0 + c.solution.x.norm()), c.seed ^ 0xA5);
        match feasible_perturbation(problem, &c.solution, &offset, 1e-4, c.seed) {
            Ok((yf, pert)) => {
                let mu1 = weighted_perturbation_norm(&pert, &w).unwrap();
                let check = rho_at(problem, &yf, &c.solution.xi, &w)
                    .and_then(|rho| Ok((rho, tau_zero(problem, &yf, &w)?)));
                match check {
                    Ok((rho, tau0)) => {
                        let bound = (mu1 + tau0 * bound_scale(&yf, &w) * mu1 * mu1) * (1.0 + 1e-8);
                        lower.check(rho <= bound, || {
                            format!("seed {}: rho(xi0) {rho:e} > {bound:e}", c.seed)
                        });
                    }
                    Err(e) => lower.error(e),
                }
            }
            Err(e) => lower.error(e),
        }

        // y from a perturbed solve against x from the unperturbed one.
        let pert = gen_perturbation(problem, 1e-6, c.seed).unwrap();
        match problem.perturbed(&pert).and_then(|pp| solve_ilse(&pp)) {
            Ok(sol_y) => match solution_distance_lower_bound(problem, &sol_y.x) {
                Ok(lb) => {
                    let dist = (&c.solution.x - &sol_y.x).norm();
                    distance.check(lb <= dist, || format!("seed {}: {lb:e} > {dist:e}", c.seed));
                }
                Err(e) => distance.error(e),
            },
            Err(e) => distance.error(e),
        }
    }
    // r_y = 0: the full-row-rank claim has no hypothesis to stand on.
    if let Some((problem, x0)) = consistent_case(cfg.seed) {
        if problem.residual(&x0).map(|r| r.amax() == 0.0).unwrap_or(false) {
            full_rank.skipped += 1;
        }
    }
    props.extend([kron, full_rank, min_norm, xi1_opt, tau_bound, tau0_eq, alpha_thm, lower, distance]);

    let mut mono = PropertyResult::new("lower_bound_map_monotone");
    for c in &cases {
        let tau0 = 1.0 + (c.seed % 97) as f64;
        let scale = 0.5 + (c.seed % 13) as f64;
        let ts = gen_gaussian_vector(20, 1.0, c.seed);
        for pair in ts.as_slice().windows(2) {
            let (lo, hi) = if pair[0].abs() <= pair[1].abs() {
                (pair[0].abs(), pair[1].abs())
            } else {
                (pair[1].abs(), pair[0].abs())
            };
            let (flo, fhi) = (lower_bound_map(lo, tau0, scale), lower_bound_map(hi, tau0, scale));
            mono.check(flo <= fhi, || format!("f({lo}) = {flo} > f({hi}) = {fhi}"));
        }
    }
    props.push(mono);

    // oracle
    let mut gap = PropertyResult::new("oracle_not_worse_than_xi1");
    for c in cases.iter().take(5) {
        let opts = MinimizeOptions {
            seed: c.seed,
            ..MinimizeOptions::default()
        };
        let res = minimize_rho(&c.problem, &c.y, &w, &opts)
            .and_then(|m| Ok((m, rho_at(&c.problem, &c.y, &xi_one(&c.problem, &c.y)?, &w)?)));
        match res {
            Ok((m, r1)) => gap.check(m.rho_star <= r1, || format!("seed {}: {} > {r1}", c.seed, m.rho_star)),
            Err(e) => gap.error(e),
        }
    }
    props.push(gap);

    // generators
    let mut sigma_orth = PropertyResult::new("sigma_orthogonality");
    let mut orth = PropertyResult::new("orthogonal_generator");
    let mut ladder = PropertyResult::new("geometric_ladder_decreasing");
    for c in &cases {
        let (pp, qq) = (c.problem.sig.p, c.problem.sig.q);
        let hb = 2.0 * ((c.seed % 5) as f64) / 4.0;
        let q = gen_sigma_orthogonal(pp, qq, c.seed, hb);
        let sig = SignatureMatrix::new(pp, qq).to_dense();
        let r = (q.transpose() * &sig * &q - &sig).amax();
        sigma_orth.check(r <= 1e-12 * (pp + qq) as f64, || format!("seed {}: {r:e}", c.seed));

        let n = c.problem.n() + c.problem.m();
        let u = gen_random_orthogonal(n, c.seed);
        let r = (u.tr_mul(&u) - Matrix::identity(n, n)).amax();
        orth.check(r <= 1e-13 * n as f64, || format!("seed {}: {r:e}", c.seed));

        let cols = c.problem.n().max(2);
        let kappa = 1.0 + (c.seed % 1000) as f64;
        let d = gen_geometric_diagonal(cols, cols, kappa).unwrap();
        let dec = (1..cols).all(|i| d[(i, i)] < d[(i - 1, i - 1)]);
        ladder.check(dec, || format!("kappa {kappa}"));
    }
    props.extend([sigma_orth, orth, ladder]);

    // harness
    let mut mu = PropertyResult::new("mu1_equals_weighted_norm");
    for c in &cases {
        let pert = gen_perturbation(&c.problem, 1e-3, c.seed).unwrap();
        let a = mu_one(&pert);
        let b = weighted_perturbation_norm(&pert, &w).unwrap();
        mu.check(rel_diff(a, b) <= 1e-14, || format!("{a:e} vs {b:e}"));
    }
    props.push(mu);

    let mut eps_scaling = PropertyResult::new("eps_scaling");
    for c in cases.iter().take(5) {
        let dir = gen_perturbation(&c.problem, 1.0, c.seed).unwrap();
        let rhos: Vec<Option<f64>> = [1e-6, 1e-8, 1e-10]
            .iter()
            .map(|&eps| {
                let pp = c.problem.perturbed(&dir.scaled(eps)).ok()?;
                let y = solve_ilse(&pp).ok()?.x;
                rho_at(&c.problem, &y, &xi_one(&c.problem, &y).ok()?, &w).ok()
            })
            .collect();
        match rhos.as_slice() {
            [Some(a), Some(b), Some(cc)] => {
                for (r1, r2) in [(a, b), (b, cc)] {
                    let ratio = (r1 / r2) / 100.0;
                    eps_scaling.check((0.1..=10.0).contains(&ratio), || {
                        format!("seed {}: rho ratio / eps ratio = {ratio:e}", c.seed)
                    });
                }
            }
            _ => eps_scaling.error(format!("seed {}: evaluation failed", c.seed)),
        }
    }
    props.push(eps_scaling);

    let mut csv = PropertyResult::new("csv_round_trip");
    let small = ExperimentConfig {
        m: 8,
        n: 4,
        s: 2,
        p: 5,
        q: 3,
        kappa_a_list: vec![10.0],
        kappa_b_list: vec![10.0, 1e3],
        eps_list: vec![1e-6],
        trials_per_cell: 2,
        base_seed: cfg.seed,
        ..ExperimentConfig::default()
    };
    match run_experiment(&small) {
        Ok(out) => {
            let text = format_csv(&out.rows);
            match parse_csv(&text) {
                Ok(parsed) => {
                    let same_values = parsed.iter().zip(&out.rows).all(|(a, b)| {
                        a.seed == b.seed
                            && a.condition_flag == b.condition_flag
                            && [
                                (a.mu_1, b.mu_1),
                                (a.rho_xi1, b.rho_xi1),
                                (a.gamma, b.gamma),
                                (a.tau0, b.tau0),
                            ]
                            .iter()
                            .all(|(x, y)| rel_diff(*x, *y) <= 5e-6)
                    });
                    csv.check(format_csv(&parsed) == text && same_values, || "re-emitted CSV differs".into());
                }
                Err(e) => csv.error(e),
            }
        }
        Err(e) => csv.error(e),
    }
    props.push(csv);

    VerifyReport { properties: props }
}
