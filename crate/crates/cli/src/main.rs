use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ilse::harness::{
    format_outcome, run_experiment, verify_suite, ExperimentConfig, OutputFormat, VerifyConfig,
};
use ilse::io::{read_bundle, read_vector, write_bundle, write_vector};
use ilse::solver::{check_well_posedness_default, relative_augmented_residual};
use ilse::testgen::{GenParams, DEFAULT_HYPER_BOUND};
use ilse::{backward_error_bounds, normal_equation_residuals, solve_ilse, IlseError, WeightScheme};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VERIFY: u8 = 3;

/// Equality-constrained indefinite least squares: solver, backward-error
/// estimates and the experiment harness.
#[derive(Parser, Debug)]
#[command(name = "ilse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the problem stored in a bundle directory.
    Solve {
        #[arg(long, value_name = "DIR")]
        problem: PathBuf,
        /// Also write x as a vector file.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Backward-error report for a candidate solution, as JSON.
    BackwardError {
        #[arg(long, value_name = "DIR")]
        problem: PathBuf,
        #[arg(long, value_name = "FILE")]
        y: PathBuf,
        /// Multiplier of the unperturbed problem, enables rho(xi0).
        #[arg(long, value_name = "FILE")]
        xi0: Option<PathBuf>,
        #[command(flatten)]
        weights: WeightArgs,
    },
    /// Write a generated instance to a bundle directory.
    Gen {
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        s: usize,
        #[arg(long, default_value_t = 60)]
        p: usize,
        #[arg(long, default_value_t = 40)]
        q: usize,
        #[arg(long = "kappa-a", default_value_t = 1e2)]
        kappa_a: f64,
        #[arg(long = "kappa-b", default_value_t = 1e2)]
        kappa_b: f64,
        #[arg(long, default_value_t = 2019)]
        seed: u64,
        #[arg(long = "hyper-bound", default_value_t = DEFAULT_HYPER_BOUND)]
        hyper_bound: f64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run an experiment grid and write the table.
    Experiment(ExperimentArgs),
    /// Run the property suite.
    Verify {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug, Default)]
struct WeightArgs {
    #[arg(long)]
    theta1: Option<f64>,
    #[arg(long)]
    theta2: Option<f64>,
    #[arg(long)]
    theta3: Option<f64>,
}

impl WeightArgs {
    fn apply(&self, base: WeightScheme) -> Result<WeightScheme> {
        Ok(WeightScheme::new(
            self.theta1.unwrap_or(base.theta1),
            self.theta2.unwrap_or(base.theta2),
            self.theta3.unwrap_or(base.theta3),
        )?)
    }
}

/// Flags override the values read from `--config`.
#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON file mirroring the experiment configuration.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Comma-separated nominal values.
    #[arg(long = "kappa-a", value_delimiter = ',')]
    kappa_a: Option<Vec<f64>>,
    #[arg(long = "kappa-b", value_delimiter = ',')]
    kappa_b: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Trials per grid cell.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    weights: WeightArgs,
    /// csv, markdown or json.
    #[arg(long)]
    format: Option<String>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text)
                    .map_err(IlseError::from)
                    .with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value.clone() {
                    cfg.$field = v;
                }
            };
        }
        set!(m, self.m);
        set!(n, self.n);
        set!(s, self.s);
        set!(p, self.p);
        set!(q, self.q);
        set!(kappa_a_list, self.kappa_a);
        set!(kappa_b_list, self.kappa_b);
        set!(eps_list, self.eps);
        set!(trials_per_cell, self.trials);
        set!(base_seed, self.seed);
        set!(jobs, self.jobs);
        if let Some(f) = &self.format {
            cfg.output_format = f.parse::<OutputFormat>()?;
        }
        cfg.weights = self.weights.apply(cfg.weights)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve { problem, out } => {
            let problem = read_bundle(&problem)?;
            let wp = check_well_posedness_default(&problem);
            let sol = solve_ilse(&problem)?;
            let gamma = relative_augmented_residual(&problem, &sol)?;
            let (r1, r2) = normal_equation_residuals(&problem, &sol.x, &sol.xi)?;
            if let Some(path) = &out {
                write_vector(path, &sol.x)?;
            }
            let report = json!({
                "x": sol.x.as_slice(),
                "xi": sol.xi.as_slice(),
                "gamma": gamma,
                "normal_residual_1": r1.norm(),
                "normal_residual_2": r2.norm(),
                "min_projected_eig": wp.min_projected_eig,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Command::BackwardError {
            problem,
            y,
            xi0,
            weights,
        } => {
            let problem = read_bundle(&problem)?;
            let y = read_vector(&y)?;
            let xi0 = xi0.as_deref().map(read_vector).transpose()?;
            let w = weights.apply(WeightScheme::unit())?;
            let report = backward_error_bounds(&problem, &y, xi0.as_ref(), &w)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Command::Gen {
            m,
            n,
            s,
            p,
            q,
            kappa_a,
            kappa_b,
            seed,
            hyper_bound,
            out,
        } => {
            let params = GenParams {
                m,
                n,
                s,
                p,
                q,
                kappa_a,
                kappa_b,
                seed,
                hyper_bound,
            };
            params.validate()?;
            let (problem, achieved) = ilse::testgen::gen_ilse_instance(&params)?;
            write_bundle(&out, &problem)?;
            println!("{}", json!({ "achieved_kappa_A": achieved, "dir": out }));
            Ok(0)
        }
        Command::Experiment(args) => {
            let cfg = args.config()?;
            let outcome = run_experiment(&cfg)?;
            let failed = outcome.rows.iter().filter(|r| !r.is_ok()).count();
            if failed > 0 {
                eprintln!("{failed} of {} trials failed", outcome.rows.len());
            }
            for cell in &outcome.summary {
                eprintln!(
                    "eps {:e} kappa_A {:e} kappa_B {:e}: median rho_xi1/eps {:.3e}",
                    cell.eps, cell.kappa_a_nominal, cell.kappa_b, cell.median_rho_over_eps
                );
            }
            emit(args.out.as_deref(), &format_outcome(&outcome, cfg.output_format)?)?;
            Ok(0)
        }
        Command::Verify {
            instances,
            seed,
            json,
        } => {
            let report = verify_suite(&VerifyConfig {
                instances,
                seed,
                ..VerifyConfig::default()
            });
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.format_text());
            }
            if report.all_passed() {
                Ok(0)
            } else {
                let names: Vec<&str> = report.failures().iter().map(|p| p.name).collect();
                eprintln!("failed properties: {}", names.join(", "));
                Ok(EXIT_VERIFY)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            let numerical = err
                .chain()
                .any(|e| e.downcast_ref::<IlseError>().is_some_and(IlseError::is_numerical));
            ExitCode::from(if numerical { EXIT_NUMERICAL } else { EXIT_USAGE })
        }
    }
}
