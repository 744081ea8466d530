//! Config-driven runner behind the `vrpl` binary: `run`, `sweep` and `validate`.
//!
//! Exit codes: 0 success, 2 config error, 3 planner infeasibility (or a plan
//! that fails validation), 4 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composite::CompositeProblem;
use crate::driver::{run_with, RunOptions, RunResult};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::planner::{
    complexity_for_epochs, ols_slope, plan_log_factors, plan_with, rate_exponents, validate_plan,
    ConditionReport, CorrectedTarget, EpochChoice, ParamPlan, PlanOptions,
};
use crate::problems::{build, ProblemSpec};
use crate::subproblem::{SolverKind, SolverSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

fn default_delta() -> f64 {
    0.1
}

fn default_m_factor() -> f64 {
    6.0
}

fn default_true() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("vrpl-out")
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_solver() -> SolverSpec {
    SolverSpec::new(SolverKind::ExactQuadratic, 1e-8, 0.01)
}

/// Planner inputs; `M` defaults to `M_factor·l_f·L_g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoPlan {
    pub eps: f64,
    #[serde(rename = "Delta", default = "default_delta")]
    pub delta: f64,
    #[serde(rename = "M", default)]
    pub big_m: Option<f64>,
    #[serde(rename = "M_factor", default = "default_m_factor")]
    pub m_factor: f64,
    #[serde(default)]
    pub tau_override: Option<u64>,
    #[serde(default)]
    pub corrected_target: CorrectedTarget,
    #[serde(default)]
    pub epochs: EpochChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanConfig {
    Auto(AutoPlan),
    Explicit(ParamPlan),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub estimator: EstimatorKind,
    #[serde(default = "default_solver")]
    pub solver: SolverSpec,
    pub plan: PlanConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_path: PathBuf,
    #[serde(default = "default_true")]
    pub trace_stationarity: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed is required".into()));
        }
        if let PlanConfig::Auto(a) = &self.plan {
            if !(a.eps > 0.0) {
                return Err(Error::Config("plan.auto.eps: must be positive".into()));
            }
            if !(a.delta > 0.0 && a.delta < 1.0) {
                return Err(Error::Config("plan.auto.Delta: must lie in (0,1)".into()));
            }
        }
        if let PlanConfig::Explicit(p) = &self.plan {
            if p.estimator != self.estimator {
                return Err(Error::Config(
                    "plan.explicit.estimator: differs from estimator".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<CompositeProblem> {
        build(&self.problem).map_err(|e| match e {
            Error::InvalidSpec(m) => Error::Config(format!("problem: {m}")),
            other => other,
        })
    }

    /// The plan for this config, with `eps` replacing the auto plan's target if given.
    pub fn make_plan(&self, problem: &CompositeProblem, eps: Option<f64>) -> Result<ParamPlan> {
        match &self.plan {
            PlanConfig::Explicit(p) => {
                if eps.is_some() {
                    return Err(Error::Config("plan: ε sweeps need an auto plan".into()));
                }
                Ok(*p)
            }
            PlanConfig::Auto(a) => {
                let c = problem.constants;
                let big_m = a.big_m.unwrap_or(a.m_factor * c.l_f * c.big_l_g);
                let opts = PlanOptions {
                    tau_override: a.tau_override,
                    corrected_target: a.corrected_target,
                    epochs: a.epochs,
                    ..PlanOptions::default()
                };
                plan_with(
                    self.estimator,
                    problem,
                    eps.unwrap_or(a.eps),
                    a.delta,
                    big_m,
                    opts,
                )
            }
        }
    }
}

/// Map an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Json(_)
        | Error::InvalidSpec(_)
        | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        _ => EXIT_RUNTIME,
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub no_stationarity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub success: Option<bool>,
    pub mean_gnorm2: Option<f64>,
    pub total_evals_g: u128,
    #[serde(rename = "total_evals_J")]
    pub total_evals_j: u128,
    pub phi_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub estimator: EstimatorKind,
    pub plan: ParamPlan,
    pub runs: Vec<SeedSummary>,
    /// Fraction of traced runs meeting the stationarity target.
    pub success_fraction: Option<f64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn seed_summary(result: &RunResult) -> SeedSummary {
    SeedSummary {
        seed: result.trace.seed,
        success: result.success,
        mean_gnorm2: result.trace.mean_gnorm2,
        total_evals_g: result.trace.total_evals_g(),
        total_evals_j: result.trace.total_evals_j(),
        phi_final: result.trace.records.last().map_or(f64::NAN, |r| r.phi),
    }
}

/// Run every seed of the config; writes `seed_<s>.csv` files and `summary.json`.
pub fn cmd_run(config_path: &Path, overrides: &Overrides) -> Result<RunSummary> {
    let cfg = RunConfig::load(config_path)?;
    run_config(&cfg, overrides)
}

pub fn run_config(cfg: &RunConfig, overrides: &Overrides) -> Result<RunSummary> {
    let problem = cfg.build_problem()?;
    let plan = cfg.make_plan(&problem, None)?;
    let seeds = if overrides.seeds.is_empty() {
        cfg.seeds.clone()
    } else {
        overrides.seeds.clone()
    };
    let out = overrides
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_path.clone());
    fs::create_dir_all(&out)?;
    let opts = RunOptions {
        trace_stationarity: cfg.trace_stationarity && !overrides.no_stationarity,
        ..RunOptions::default()
    };
    let results: Vec<Result<RunResult>> = seeds
        .par_iter()
        .map(|&seed| {
            let r = run_with(&problem, &cfg.solver, &plan, seed, opts)?;
            let file = fs::File::create(out.join(format!("seed_{seed}.csv")))?;
            r.trace.write_csv(std::io::BufWriter::new(file))?;
            Ok(r)
        })
        .collect();
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(seed_summary(&r?));
    }
    let traced: Vec<bool> = runs.iter().filter_map(|r| r.success).collect();
    let success_fraction = (!traced.is_empty())
        .then(|| traced.iter().filter(|&&s| s).count() as f64 / traced.len() as f64);
    let summary = RunSummary {
        estimator: cfg.estimator,
        plan,
        runs,
        success_fraction,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps: f64,
    pub plan: ParamPlan,
    pub predicted_evals_g: u128,
    #[serde(rename = "predicted_evals_J")]
    pub predicted_evals_j: u128,
    pub measured_evals_g: Option<u128>,
    #[serde(rename = "measured_evals_J")]
    pub measured_evals_j: Option<u128>,
    /// The log factors divided out before fitting.
    pub log_factor_g: f64,
    #[serde(rename = "log_factor_J")]
    pub log_factor_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub estimator: EstimatorKind,
    pub points: Vec<SweepPoint>,
    /// Fitted `d log(count/L) / d log(1/ε)` for evaluations and Jacobians.
    pub slope_evals_g: f64,
    #[serde(rename = "slope_evals_J")]
    pub slope_evals_j: f64,
    pub expected_slope_evals_g: f64,
    #[serde(rename = "expected_slope_evals_J")]
    pub expected_slope_evals_j: f64,
    /// Whether every measured total equals its prediction.
    pub counts_match: Option<bool>,
}

/// De-logged OLS slopes of `(counts_g, counts_j)` against `log(1/ε)`.
pub fn delogged_slopes(
    eps: &[f64],
    counts: &[(f64, f64)],
    logs: &[(f64, f64)],
) -> Result<(f64, f64)> {
    let xs: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    let yg: Vec<f64> = counts
        .iter()
        .zip(logs)
        .map(|(c, l)| (c.0 / l.0).ln())
        .collect();
    let yj: Vec<f64> = counts
        .iter()
        .zip(logs)
        .map(|(c, l)| (c.1 / l.1).ln())
        .collect();
    Ok((ols_slope(&xs, &yg)?, ols_slope(&xs, &yj)?))
}

/// Plan and (optionally) run the config at each `ε`, fitting complexity slopes.
pub fn cmd_sweep(
    config_path: &Path,
    eps_list: &[f64],
    overrides: &Overrides,
    measure: bool,
) -> Result<SweepSummary> {
    let cfg = RunConfig::load(config_path)?;
    sweep_config(&cfg, eps_list, overrides, measure)
}

pub fn sweep_config(
    cfg: &RunConfig,
    eps_list: &[f64],
    overrides: &Overrides,
    measure: bool,
) -> Result<SweepSummary> {
    if eps_list.len() < 3 {
        return Err(Error::Config(
            "--eps: a slope fit needs at least three values".into(),
        ));
    }
    let problem = cfg.build_problem()?;
    let seed = overrides.seeds.first().copied().unwrap_or(cfg.seeds[0]);
    let population = if problem.is_finite_sum() {
        problem.population_size() as u64
    } else {
        0
    };
    let mut points = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let plan = cfg.make_plan(&problem, Some(eps))?;
        let (lg, lj) = plan_log_factors(&plan, (problem.dim_m, problem.dim_n));
        let measured = if measure {
            let opts = RunOptions {
                trace_stationarity: false,
                ..RunOptions::default()
            };
            Some(run_with(&problem, &cfg.solver, &plan, seed, opts)?)
        } else {
            None
        };
        // drawn epochs for randomized schedules, the fixed pattern otherwise
        let taus = match &measured {
            Some(r) => r.trace.epoch_lengths.clone(),
            None => match plan.tau_schedule {
                crate::planner::TauSchedule::Fixed { tau } => vec![tau; plan.k as usize],
                crate::planner::TauSchedule::Randomized {
                    s_tau,
                    distribution,
                } => crate::planner::draw_epochs(
                    s_tau,
                    &distribution,
                    &crate::sampling::RngStream::new(seed),
                )?,
            },
        };
        let cached = measured.as_ref().is_none_or(|r| r.trace.jacobians_cached);
        let predicted =
            complexity_for_epochs(plan.estimator, &plan.batch_plan, &taus, population, cached);
        points.push(SweepPoint {
            eps,
            plan,
            predicted_evals_g: predicted.evals_g,
            predicted_evals_j: predicted.evals_j,
            measured_evals_g: measured.as_ref().map(|r| r.trace.total_evals_g()),
            measured_evals_j: measured.as_ref().map(|r| r.trace.total_evals_j()),
            log_factor_g: lg,
            log_factor_j: lj,
        });
    }
    let eps: Vec<f64> = points.iter().map(|p| p.eps).collect();
    let counts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            (
                p.measured_evals_g.unwrap_or(p.predicted_evals_g) as f64,
                p.measured_evals_j.unwrap_or(p.predicted_evals_j) as f64,
            )
        })
        .collect();
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.log_factor_g, p.log_factor_j))
        .collect();
    let (sg, sj) = delogged_slopes(&eps, &counts, &logs)?;
    let target = match cfg.plan {
        PlanConfig::Auto(a) => a.corrected_target,
        PlanConfig::Explicit(_) => CorrectedTarget::Evaluations,
    };
    let (eg, ej) = rate_exponents(cfg.estimator, target);
    let counts_match = measure.then(|| {
        points.iter().all(|p| {
            p.measured_evals_g == Some(p.predicted_evals_g)
                && p.measured_evals_j == Some(p.predicted_evals_j)
        })
    });
    let summary = SweepSummary {
        estimator: cfg.estimator,
        points,
        slope_evals_g: sg,
        slope_evals_j: sj,
        expected_slope_evals_g: eg,
        expected_slope_evals_j: ej,
        counts_match,
    };
    let out = overrides
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_path.clone());
    fs::create_dir_all(&out)?;
    write_json(&out.join("sweep.json"), &summary)?;
    Ok(summary)
}

/// Plan (or load) the config's plan and evaluate all conditions.
pub fn cmd_validate(config_path: &Path) -> Result<(ParamPlan, ConditionReport)> {
    let cfg = RunConfig::load(config_path)?;
    validate_config(&cfg)
}

pub fn validate_config(cfg: &RunConfig) -> Result<(ParamPlan, ConditionReport)> {
    let problem = cfg.build_problem()?;
    let plan = cfg.make_plan(&problem, None)?;
    let report = validate_plan(&plan, &problem)?;
    Ok((plan, report))
}

pub fn format_report(report: &ConditionReport) -> String {
    let mut s = String::new();
    for c in &report.margins {
        s.push_str(&format!(
            "{:<6} {:<28} lhs={:<14.6e} rhs={:<14.6e} margin={:.6e}\n",
            if c.pass { "ok" } else { "FAIL" },
            c.name,
            c.lhs,
            c.rhs,
            c.margin
        ));
    }
    s.push_str(&format!(
        "admissible (θ ∈ 𝒞): {}\noverall: {}\n",
        report.admissible,
        if report.pass { "pass" } else { "fail" }
    ));
    s
}

#[derive(Debug, Parser)]
#[command(name = "vrpl", about = "Variance-reduced prox-linear experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured method for every seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_stationarity: bool,
    },
    /// Plan and run over several ε values and fit complexity slopes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "eps", required = true)]
        eps: Vec<f64>,
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report planned totals only, without running.
        #[arg(long)]
        predicted_only: bool,
    },
    /// Print every condition margin of the configured plan.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn init_threads() {
    if let Some(n) = std::env::var("VRPL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

/// Parse `args`, execute, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    init_threads();
    let outcome = match cli.command {
        Command::Run {
            config,
            seeds,
            out,
            no_stationarity,
        } => cmd_run(
            &config,
            &Overrides {
                seeds,
                out,
                no_stationarity,
            },
        )
        .map(|s| {
            for r in &s.runs {
                println!(
                    "seed {:>6}  success={:<5}  mean‖G‖²={:<12}  evals_g={}  evals_J={}",
                    r.seed,
                    r.success.map_or("n/a".into(), |b| b.to_string()),
                    r.mean_gnorm2.map_or("n/a".into(), |v| format!("{v:.4e}")),
                    r.total_evals_g,
                    r.total_evals_j
                );
            }
            if let Some(f) = s.success_fraction {
                println!("success_fraction = {f:.3}");
            }
            EXIT_OK
        }),
        Command::Sweep {
            config,
            eps,
            seeds,
            out,
            predicted_only,
        } => cmd_sweep(
            &config,
            &eps,
            &Overrides {
                seeds,
                out,
                no_stationarity: true,
            },
            !predicted_only,
        )
        .map(|s| {
            for p in &s.points {
                println!(
                    "eps={:<8.1e} tau={:<4} K={:<8} evals_g={} evals_J={}",
                    p.eps,
                    p.plan.tau_schedule.tau_max(),
                    p.plan.k,
                    p.measured_evals_g.unwrap_or(p.predicted_evals_g),
                    p.measured_evals_j.unwrap_or(p.predicted_evals_j)
                );
            }
            println!(
                "slopes: evaluations {:.3} (rate {:.3}), Jacobians {:.3} (rate {:.3})",
                s.slope_evals_g,
                s.expected_slope_evals_g,
                s.slope_evals_j,
                s.expected_slope_evals_j
            );
            EXIT_OK
        }),
        Command::Validate { config } => cmd_validate(&config).map(|(_, report)| {
            print!("{}", format_report(&report));
            if report.pass {
                EXIT_OK
            } else {
                EXIT_INFEASIBLE
            }
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
