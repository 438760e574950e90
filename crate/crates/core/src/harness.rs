//! Experiment pipeline: generate, perturb, solve, and compare the injected
//! perturbation size `μ1` with the estimate `ρ(ξ1)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backward_error::backward_error_bounds;
use crate::error::{IlseError, Result};
use crate::solver::{relative_augmented_residual, solve_ilse};
use crate::testgen::{gen_ilse_instance, gen_perturbation, GenParams, DEFAULT_HYPER_BOUND};
use crate::types::{IlseProblem, IlseSolution, PerturbationQuadruple, WeightScheme};

pub use crate::verify::{verify_suite, VerifyConfig, VerifyReport};

pub const CSV_HEADER: &str =
    "eps,kappa_A,kappa_B,gamma,gamma_bar,mu_1,rho_xi1,rho_xi0,tau0,condition_flag,seed";

const FAILED_FLAG: &str = "failed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Markdown,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = IlseError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            "json" => Ok(OutputFormat::Json),
            other => Err(IlseError::InvalidInput(format!("unknown output format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub p: usize,
    pub q: usize,
    #[serde(rename = "kappa_A_list")]
    pub kappa_a_list: Vec<f64>,
    #[serde(rename = "kappa_B_list")]
    pub kappa_b_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub trials_per_cell: usize,
    pub base_seed: u64,
    pub weights: WeightScheme,
    pub output_format: OutputFormat,
    pub hyper_bound: f64,
    /// Worker threads; the output does not depend on it.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    /// The `(100, 50, 20, 60, 40)` grid over `ε ∈ {1e-6, 1e-12}`,
    /// nominal `κ_A ∈ {1e2, 1e4, 1e8}` and `κ_B ∈ {1e2, 1e4, 1e6, 1e8}`.
    fn default() -> Self {
        ExperimentConfig {
            m: 100,
            n: 50,
            s: 20,
            p: 60,
            q: 40,
            kappa_a_list: vec![1e2, 1e4, 1e8],
            kappa_b_list: vec![1e2, 1e4, 1e6, 1e8],
            eps_list: vec![1e-6, 1e-12],
            trials_per_cell: 1,
            base_seed: 2019,
            weights: WeightScheme::unit(),
            output_format: OutputFormat::Csv,
            hyper_bound: DEFAULT_HYPER_BOUND,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kappa_a_list.is_empty() || self.kappa_b_list.is_empty() || self.eps_list.is_empty() {
            return Err(IlseError::InvalidInput("kappa and eps lists must be nonempty".into()));
        }
        if self.trials_per_cell == 0 {
            return Err(IlseError::InvalidInput("trials_per_cell must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(IlseError::InvalidInput("jobs must be at least 1".into()));
        }
        self.weights.validate()?;
        for &eps in &self.eps_list {
            if !(eps >= 0.0) || !eps.is_finite() {
                return Err(IlseError::InvalidInput(format!("bad eps {eps}")));
            }
        }
        for (ka, kb) in self.kappa_a_list.iter().zip(self.kappa_b_list.iter().cycle()) {
            self.gen_params(*ka, *kb, 0).validate()?;
        }
        for kb in &self.kappa_b_list {
            self.gen_params(self.kappa_a_list[0], *kb, 0).validate()?;
        }
        Ok(())
    }

    pub fn gen_params(&self, kappa_a: f64, kappa_b: f64, seed: u64) -> GenParams {
        GenParams {
            m: self.m,
            n: self.n,
            s: self.s,
            p: self.p,
            q: self.q,
            kappa_a,
            kappa_b,
            seed,
            hyper_bound: self.hyper_bound,
        }
    }

    /// Every trial in output order: `ε`, then `κ_B`, then `κ_A`, then trial.
    pub fn trials(&self) -> Vec<TrialSpec> {
        let mut out = Vec::new();
        for &eps in &self.eps_list {
            for &kappa_b in &self.kappa_b_list {
                for &kappa_a in &self.kappa_a_list {
                    for _ in 0..self.trials_per_cell {
                        let index = out.len() as u64;
                        out.push(TrialSpec {
                            eps,
                            kappa_a,
                            kappa_b,
                            seed: trial_seed(self.base_seed, index),
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSpec {
    pub eps: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub seed: u64,
}

/// SplitMix64 finalizer over `base ⊕ index`.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    let mut z = (base ^ index).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub eps: f64,
    /// Nominal `κ_A` of the generator; not part of the CSV table.
    pub kappa_a_nominal: Option<f64>,
    /// Achieved `σ_max(A) / σ_min(A)`.
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub gamma: f64,
    pub gamma_bar: f64,
    pub mu_1: f64,
    pub rho_xi1: f64,
    pub rho_xi0: f64,
    pub tau0: f64,
    pub condition_flag: bool,
    pub seed: u64,
    pub failure: Option<String>,
}

impl ExperimentRow {
    fn failed(spec: &TrialSpec, reason: String) -> Self {
        ExperimentRow {
            eps: spec.eps,
            kappa_a_nominal: Some(spec.kappa_a),
            kappa_a: f64::NAN,
            kappa_b: spec.kappa_b,
            gamma: f64::NAN,
            gamma_bar: f64::NAN,
            mu_1: f64::NAN,
            rho_xi1: f64::NAN,
            rho_xi0: f64::NAN,
            tau0: f64::NAN,
            condition_flag: false,
            seed: spec.seed,
            failure: Some(reason),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// `‖[ΔA Δb; ΔB Δd]‖_F`, summed entry by entry.
pub fn mu_one(pert: &PerturbationQuadruple) -> f64 {
    let mut sum = 0.0;
    for v in pert
        .e
        .iter()
        .chain(pert.f.iter())
        .chain(pert.f_mat.iter())
        .chain(pert.g.iter())
    {
        sum += v * v;
    }
    sum.sqrt()
}

/// Relative residual of the augmented system at `sol`; see
/// [`relative_augmented_residual`].
pub fn residual_gamma(problem: &IlseProblem, sol: &IlseSolution) -> Result<f64> {
    relative_augmented_residual(problem, sol)
}

/// Everything one trial produces, before it is flattened into a row.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub problem: IlseProblem,
    pub achieved_kappa_a: f64,
    pub solution: IlseSolution,
    pub perturbation: PerturbationQuadruple,
    pub perturbed_problem: IlseProblem,
    pub perturbed_solution: IlseSolution,
}

/// Generates the instance and both solutions for one trial.
pub fn trial_data(params: &GenParams, eps: f64, seed: u64) -> Result<TrialData> {
    let params = GenParams { seed, ..*params };
    let (problem, achieved_kappa_a) = gen_ilse_instance(&params)?;
    let solution = solve_ilse(&problem)?;
    let perturbation = gen_perturbation(&problem, eps, seed)?;
    let perturbed_problem = problem.perturbed(&perturbation)?;
    let perturbed_solution = solve_ilse(&perturbed_problem)?;
    Ok(TrialData {
        problem,
        achieved_kappa_a,
        solution,
        perturbation,
        perturbed_problem,
        perturbed_solution,
    })
}

/// One trial: the unperturbed solve gives `x`, `ξ0` and `γ`; the perturbed
/// solve gives the candidate `y` and `γ̄`; `ρ(ξ1)` and `ρ(ξ0)` are then
/// evaluated for `y` against the original problem.
pub fn run_trial(params: &GenParams, eps: f64, w: &WeightScheme, seed: u64) -> ExperimentRow {
    let spec = TrialSpec {
        eps,
        kappa_a: params.kappa_a,
        kappa_b: params.kappa_b,
        seed,
    };
    try_trial(params, &spec, w).unwrap_or_else(|e| ExperimentRow::failed(&spec, e.to_string()))
}

fn try_trial(params: &GenParams, spec: &TrialSpec, w: &WeightScheme) -> Result<ExperimentRow> {
    let data = trial_data(params, spec.eps, spec.seed)?;
    let gamma = residual_gamma(&data.problem, &data.solution)?;
    let gamma_bar = residual_gamma(&data.perturbed_problem, &data.perturbed_solution)?;
    let y = &data.perturbed_solution.x;
    let report = backward_error_bounds(&data.problem, y, Some(&data.solution.xi), w)?;
    Ok(ExperimentRow {
        eps: spec.eps,
        kappa_a_nominal: Some(spec.kappa_a),
        kappa_a: data.achieved_kappa_a,
        kappa_b: spec.kappa_b,
        gamma,
        gamma_bar,
        mu_1: mu_one(&data.perturbation),
        rho_xi1: report.rho_xi1,
        rho_xi0: report.rho_xi0.unwrap_or(f64::NAN),
        tau0: report.tau0,
        condition_flag: report.small_rho_condition,
        seed: spec.seed,
        failure: None,
    })
}

/// Medians over the successful trials of one `(ε, κ_A, κ_B)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub eps: f64,
    pub kappa_a_nominal: f64,
    pub kappa_b: f64,
    pub trials: usize,
    pub failed: usize,
    pub median_mu_1: f64,
    pub median_rho_xi1: f64,
    /// `median ρ(ξ1) / ε`; NaN when `ε = 0`.
    pub median_rho_over_eps: f64,
    pub median_mu_over_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutcome {
    pub rows: Vec<ExperimentRow>,
    pub summary: Vec<CellSummary>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

pub fn summarize(config: &ExperimentConfig, rows: &[ExperimentRow]) -> Vec<CellSummary> {
    let per_cell = config.trials_per_cell;
    rows.chunks(per_cell)
        .map(|cell| {
            let ok: Vec<&ExperimentRow> = cell.iter().filter(|r| r.is_ok()).collect();
            let collect = |f: &dyn Fn(&ExperimentRow) -> f64| -> f64 {
                let mut v: Vec<f64> = ok.iter().map(|r| f(r)).collect();
                median(&mut v)
            };
            let eps = cell[0].eps;
            CellSummary {
                eps,
                kappa_a_nominal: cell[0].kappa_a_nominal.unwrap_or(f64::NAN),
                kappa_b: cell[0].kappa_b,
                trials: cell.len(),
                failed: cell.len() - ok.len(),
                median_mu_1: collect(&|r| r.mu_1),
                median_rho_xi1: collect(&|r| r.rho_xi1),
                median_rho_over_eps: if eps > 0.0 {
                    collect(&|r| r.rho_xi1 / eps)
                } else {
                    f64::NAN
                },
                median_mu_over_rho: collect(&|r| r.mu_1 / r.rho_xi1),
            }
        })
        .collect()
}

/// Runs the full grid. Rows come back in [`ExperimentConfig::trials`]
/// order regardless of `config.jobs`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let specs = config.trials();
    let run = |spec: &TrialSpec| {
        let params = config.gen_params(spec.kappa_a, spec.kappa_b, spec.seed);
        run_trial(&params, spec.eps, &config.weights, spec.seed)
    };
    let rows: Vec<ExperimentRow> = if config.jobs <= 1 {
        specs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| IlseError::InvalidInput(e.to_string()))?;
        pool.install(|| specs.par_iter().map(run).collect())
    };
    if rows.iter().all(|r| !r.is_ok()) {
        return Err(IlseError::AllTrialsFailed);
    }
    let summary = summarize(config, &rows);
    Ok(ExperimentOutcome { rows, summary })
}

/// Reruns the trial of `config` whose derived seed is `seed`.
pub fn replay_trial(config: &ExperimentConfig, seed: u64) -> Option<ExperimentRow> {
    let spec = config.trials().into_iter().find(|t| t.seed == seed)?;
    let params = config.gen_params(spec.kappa_a, spec.kappa_b, spec.seed);
    Some(run_trial(&params, spec.eps, &config.weights, spec.seed))
}

/// Six significant digits in scientific notation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.5e}")
}

pub fn format_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let flag = if r.is_ok() {
            r.condition_flag.to_string()
        } else {
            FAILED_FLAG.to_string()
        };
        let nums = [
            r.eps, r.kappa_a, r.kappa_b, r.gamma, r.gamma_bar, r.mu_1, r.rho_xi1, r.rho_xi0, r.tau0,
        ];
        for v in nums {
            out.push_str(&fmt_num(v));
            out.push(',');
        }
        let _ = writeln!(out, "{flag},{}", r.seed);
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<ExperimentRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        other => {
            return Err(IlseError::Parse(format!("unexpected CSV header {other:?}")));
        }
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(IlseError::Parse(format!(
                    "row {}: expected 11 fields, found {}",
                    i + 1,
                    fields.len()
                )));
            }
            let num = |k: usize| -> Result<f64> {
                fields[k]
                    .parse::<f64>()
                    .map_err(|e| IlseError::Parse(format!("row {}, field {k}: {e}", i + 1)))
            };
            let (condition_flag, failure) = match fields[9] {
                "true" => (true, None),
                "false" => (false, None),
                FAILED_FLAG => (false, Some(FAILED_FLAG.to_string())),
                other => return Err(IlseError::Parse(format!("bad condition flag {other:?}"))),
            };
            Ok(ExperimentRow {
                eps: num(0)?,
                kappa_a_nominal: None,
                kappa_a: num(1)?,
                kappa_b: num(2)?,
                gamma: num(3)?,
                gamma_bar: num(4)?,
                mu_1: num(5)?,
                rho_xi1: num(6)?,
                rho_xi0: num(7)?,
                tau0: num(8)?,
                condition_flag,
                seed: fields[10]
                    .parse()
                    .map_err(|e| IlseError::Parse(format!("row {}: bad seed: {e}", i + 1)))?,
                failure,
            })
        })
        .collect()
}

/// Table with the seven columns `ε, κ_A, κ_B, γ, γ̄, μ1, ρ(ξ1)` followed by
/// the per-cell medians.
pub fn format_markdown(outcome: &ExperimentOutcome) -> String {
    let mut out = String::new();
    out.push_str("| eps | kappa_A | kappa_B | gamma | gamma_bar | mu_1 | rho_xi1 |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for r in &outcome.rows {
        if r.is_ok() {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} |",
                fmt_num(r.eps),
                fmt_num(r.kappa_a),
                fmt_num(r.kappa_b),
                fmt_num(r.gamma),
                fmt_num(r.gamma_bar),
                fmt_num(r.mu_1),
                fmt_num(r.rho_xi1)
            );
        } else {
            let _ = writeln!(
                out,
                "| {} | failed | {} | | | | |",
                fmt_num(r.eps),
                fmt_num(r.kappa_b)
            );
        }
    }
    out.push_str("\n| eps | kappa_A (nominal) | kappa_B | trials | failed | median mu_1 | median rho_xi1 | median rho_xi1/eps | median mu_1/rho_xi1 |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for c in &outcome.summary {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            fmt_num(c.eps),
            fmt_num(c.kappa_a_nominal),
            fmt_num(c.kappa_b),
            c.trials,
            c.failed,
            fmt_num(c.median_mu_1),
            fmt_num(c.median_rho_xi1),
            fmt_num(c.median_rho_over_eps),
            fmt_num(c.median_mu_over_rho)
        );
    }
    out
}

pub fn format_json(outcome: &ExperimentOutcome) -> Result<String> {
    // serde_json turns non-finite floats into null.
    Ok(serde_json::to_string_pretty(outcome)?)
}

pub fn format_outcome(outcome: &ExperimentOutcome, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => Ok(format_csv(&outcome.rows)),
        OutputFormat::Markdown => Ok(format_markdown(outcome)),
        OutputFormat::Json => format_json(outcome),
    }
}
