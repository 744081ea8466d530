//! The two-loop prox-linear method, stationarity tracing and descent audits.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::composite::{generalized_gradient, phi_value, CompositeProblem};
use crate::error::{Error, Result};
use crate::estimators::{Estimator, EstimatorKind, DEFAULT_CACHE_LIMIT};
use crate::linalg::Vector;
use crate::planner::{draw_epochs, ParamPlan, TauSchedule};
use crate::sampling::{Channel, RngStream, SamplingMode};
use crate::subproblem::{build_subproblem, reference_solve, solve, SolverSpec, SubproblemSpec};

pub const CSV_HEADER: &str = "k,i,phi,gnorm2,cum_evals_g,cum_evals_J,wall_ms";

/// One iterate `x_i^k` together with the oracle totals after its step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub k: u64,
    pub i: u64,
    pub phi: f64,
    /// `‖𝒢_M(x_i^k)‖²`, when traced.
    pub gen_grad_norm_sq: Option<f64>,
    pub cum_evals_g: u128,
    #[serde(rename = "cum_evals_J")]
    pub cum_evals_j: u128,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    pub plan: ParamPlan,
    pub epoch_lengths: Vec<u64>,
    pub records: Vec<RunRecord>,
    /// Mean of `‖𝒢_M‖²` over all records, when traced.
    pub mean_gnorm2: Option<f64>,
    /// Whether Est3/Est4 anchors kept their component Jacobians.
    pub jacobians_cached: bool,
}

impl RunTrace {
    pub fn total_evals_g(&self) -> u128 {
        self.records.last().map_or(0, |r| r.cum_evals_g)
    }

    pub fn total_evals_j(&self) -> u128 {
        self.records.last().map_or(0, |r| r.cum_evals_j)
    }

    /// Rows in the fixed `k,i,phi,gnorm2,cum_evals_g,cum_evals_J,wall_ms` layout.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            let g = r
                .gen_grad_norm_sq
                .map_or_else(|| "nan".to_string(), |v| format!("{v:e}"));
            writeln!(
                w,
                "{},{},{:e},{},{},{},{}",
                r.k, r.i, r.phi, g, r.cum_evals_g, r.cum_evals_j, r.wall_ms
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: RunTrace,
    /// `None` when stationarity was not traced.
    pub success: Option<bool>,
    pub x_final: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub trace_stationarity: bool,
    /// Objective accuracy of the reference prox-linear point; defaults to `10⁻⁴·ε/M`.
    pub reference_tolerance: Option<f64>,
    pub sampling: SamplingMode,
    pub cache_limit: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            trace_stationarity: true,
            reference_tolerance: None,
            sampling: SamplingMode::WithReplacement,
            cache_limit: DEFAULT_CACHE_LIMIT,
        }
    }
}

/// Run the method for `plan` with seed `seed`.
pub fn run(
    problem: &CompositeProblem,
    kind: EstimatorKind,
    solver: &SolverSpec,
    plan: &ParamPlan,
    seed: u64,
    trace_stationarity: bool,
) -> Result<RunResult> {
    if kind != plan.estimator {
        return Err(Error::InvalidSpec(format!(
            "plan was made for {} but {kind} was requested",
            plan.estimator
        )));
    }
    run_with(
        problem,
        solver,
        plan,
        seed,
        RunOptions {
            trace_stationarity,
            ..RunOptions::default()
        },
    )
}

/// [`run`] with explicit options; the estimator kind comes from the plan.
pub fn run_with(
    problem: &CompositeProblem,
    solver: &SolverSpec,
    plan: &ParamPlan,
    seed: u64,
    opts: RunOptions,
) -> Result<RunResult> {
    plan.validate()?;
    let solver = SolverSpec {
        eps_bar: if plan.eps_bar > 0.0 {
            plan.eps_bar
        } else {
            solver.eps_bar
        },
        delta_bar: plan.delta_bar,
        ..*solver
    };
    solver.validate()?;
    let stream = RngStream::new(seed);
    let taus = match plan.tau_schedule {
        TauSchedule::Fixed { tau } => vec![tau; plan.k as usize],
        TauSchedule::Randomized {
            s_tau,
            distribution,
        } => draw_epochs(s_tau, &distribution, &stream)?,
    };
    let estimator = Estimator::new(plan.estimator, plan.batch_plan)
        .with_sampling(opts.sampling)
        .with_cache_limit(opts.cache_limit);
    let big_m = plan.big_m;
    let ref_tol = opts
        .reference_tolerance
        .unwrap_or(1e-4 * plan.target_eps / big_m);

    let start = Instant::now();
    let mut x = problem.initial_point.clone();
    let mut records = Vec::with_capacity(taus.iter().sum::<u64>() as usize);
    let (mut cum_g, mut cum_j) = (0u128, 0u128);
    let mut jacobians_cached = plan.estimator.has_exact_anchor();
    for (k, &tau_k) in taus.iter().enumerate() {
        let k = k as u64;
        let (anchor, mut first) = estimator.begin_epoch(problem, &x, &stream, k)?;
        if plan.estimator.has_exact_anchor() && anchor.cached_component_jacobians.is_none() {
            jacobians_cached = false;
        }
        for i in 0..tau_k {
            let bundle = match first.take() {
                Some(b) if i == 0 => b,
                _ => estimator.estimate(problem, Some(&anchor), &x, k, i, &stream)?,
            };
            cum_g += bundle.evals_g as u128;
            cum_j += bundle.evals_j as u128;
            let phi = phi_value(problem, &x)?;
            let gnorm = if opts.trace_stationarity {
                Some(generalized_gradient(problem, &x, big_m, ref_tol)?.norm_sq)
            } else {
                None
            };
            let spec = build_subproblem(&bundle, &x, big_m, problem)?;
            let mut rng = stream.rng(Channel::Solver, k, i);
            let report = solve(&spec, &solver, &mut rng).map_err(|e| Error::StepFailure {
                epoch: k as usize,
                inner: i as usize,
                message: e.to_string(),
            })?;
            x = report.x_sol;
            records.push(RunRecord {
                k,
                i,
                phi,
                gen_grad_norm_sq: gnorm,
                cum_evals_g: cum_g,
                cum_evals_j: cum_j,
                wall_ms: start.elapsed().as_millis() as u64,
            });
        }
    }
    let mean_gnorm2 = if opts.trace_stationarity && !records.is_empty() {
        Some(
            records
                .iter()
                .filter_map(|r| r.gen_grad_norm_sq)
                .sum::<f64>()
                / records.len() as f64,
        )
    } else {
        None
    };
    let trace = RunTrace {
        seed,
        plan: *plan,
        epoch_lengths: taus,
        records,
        mean_gnorm2,
        jacobians_cached,
    };
    let success = match success_metric(&trace, plan.target_eps) {
        Ok(s) => Some(s),
        Err(Error::MissingStationarity) => None,
        Err(e) => return Err(e),
    };
    Ok(RunResult {
        trace,
        success,
        x_final: x,
    })
}

/// `(1/Σ_τ)·Σ‖𝒢_M(x_i^k)‖² ≤ ε`, compared exactly.
pub fn success_metric(trace: &RunTrace, eps: f64) -> Result<bool> {
    if trace.records.is_empty() {
        return Err(Error::MissingStationarity);
    }
    let mut total = 0.0;
    for r in &trace.records {
        total += r.gen_grad_norm_sq.ok_or(Error::MissingStationarity)?;
    }
    Ok(total / trace.records.len() as f64 <= eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentStep {
    pub phi_before: f64,
    pub phi_after: f64,
    pub step_sq: f64,
    /// `Φ(x) − (M − l_f L_g)‖Δx‖² − Φ(x⁺)`; negative beyond the tolerance is a violation.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentAudit {
    pub steps: Vec<DescentStep>,
    pub worst_margin: f64,
    pub violations: usize,
}

/// Exact-estimate, tightly solved steps from the problem's start point, one per
/// iteration of `plan`, checking `Φ(x⁺) ≤ Φ(x) − (M − l_f L_g)‖x⁺ − x‖²`.
///
/// The tolerance per step is `10⁻⁹·(1 + |Φ(x)|)`. `seed` only labels the audit;
/// the exact path is deterministic.
pub fn descent_audit(
    problem: &CompositeProblem,
    plan: &ParamPlan,
    seed: u64,
) -> Result<DescentAudit> {
    let _ = seed;
    plan.validate()?;
    let c = problem.constants;
    let big_m = plan.big_m;
    if !(big_m > c.l_f * c.big_l_g) {
        return Err(Error::InvalidSpec("descent audit needs M > l_f·L_g".into()));
    }
    let coef = big_m - c.l_f * c.big_l_g;
    let mut x = problem.initial_point.clone();
    let mut phi = phi_value(problem, &x)?;
    let mut steps = Vec::new();
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..plan.sigma_tau_min() {
        let (g, j) = problem.g_value_and_jacobian(&x);
        let spec = SubproblemSpec::from_problem(problem, g, j, x.clone(), big_m)?;
        let report = reference_solve(&spec, 1e-14 * (1.0 + phi.abs()))?;
        let next = report.x_sol;
        let phi_next = phi_value(problem, &next)?;
        let step_sq = (&next - &x).norm_squared();
        let margin = phi - coef * step_sq - phi_next;
        if margin < -1e-9 * (1.0 + phi.abs()) {
            violations += 1;
        }
        worst = worst.min(margin);
        steps.push(DescentStep {
            phi_before: phi,
            phi_after: phi_next,
            step_sq,
            margin,
        });
        x = next;
        phi = phi_next;
    }
    Ok(DescentAudit {
        steps,
        worst_margin: worst,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::BatchPlan;
    use crate::planner::{plan, predicted_complexity, ConstantOverrides, Provenance};
    use crate::problems::{build, ProblemSpec};
    use crate::subproblem::SolverKind;

    fn small_problem(n_components: usize) -> CompositeProblem {
        build(&ProblemSpec::regression(3, 4, n_components, 5)).unwrap()
    }

    fn explicit(kind: EstimatorKind, big_m: f64, k: u64, tau: u64, batch: BatchPlan) -> ParamPlan {
        ParamPlan {
            estimator: kind,
            big_m,
            k,
            tau_schedule: TauSchedule::Fixed { tau },
            batch_plan: batch,
            eps_bar: 1e-10,
            delta_bar: 0.01,
            target_eps: 0.1,
            target_delta: 0.1,
            provenance: Provenance::Explicit,
            constant_overrides: ConstantOverrides::default(),
        }
    }

    fn exact_solver() -> SolverSpec {
        SolverSpec::new(SolverKind::ExactQuadratic, 1e-10, 0.01)
    }

    #[test]
    fn single_step_single_record() {
        let p = small_problem(10);
        let big_m = 6.0 * p.constants.big_l_g;
        let plan = explicit(
            EstimatorKind::Est1StandardVr,
            big_m,
            1,
            1,
            BatchPlan::uniform(4),
        );
        let r = run(
            &p,
            EstimatorKind::Est1StandardVr,
            &exact_solver(),
            &plan,
            1,
            true,
        )
        .unwrap();
        assert_eq!(r.trace.records.len(), 1);
        assert_eq!(r.trace.total_evals_g(), 4);
        assert!(r.success.is_some());
    }

    #[test]
    fn zero_variance_matches_deterministic_method() {
        let p = small_problem(1);
        let big_m = 6.0 * p.constants.big_l_g;
        let plan = explicit(
            EstimatorKind::Est0MiniBatch,
            big_m,
            5,
            1,
            BatchPlan::uniform(3),
        );
        let r = run(
            &p,
            EstimatorKind::Est0MiniBatch,
            &exact_solver(),
            &plan,
            9,
            false,
        )
        .unwrap();
        assert_eq!(r.success, None);
        let audit = descent_audit(&p, &plan, 0).unwrap();
        let mut x = p.initial_point.clone();
        for _ in 0..5 {
            let (g, j) = p.g_value_and_jacobian(&x);
            let spec = SubproblemSpec::from_problem(&p, g, j, x.clone(), big_m).unwrap();
            x = reference_solve(&spec, 1e-14).unwrap().x_sol;
        }
        assert!((&x - &r.x_final).norm() < 1e-10);
        for (s, rec) in audit.steps.iter().zip(&r.trace.records) {
            assert!((s.phi_before - rec.phi).abs() < 1e-10);
        }
    }

    #[test]
    fn counters_match_prediction_and_replay_is_identical() {
        let p = small_problem(20);
        let big_m = 6.0 * p.constants.l_f * p.constants.big_l_g;
        let mut pl = plan(
            EstimatorKind::Est3ExactAnchorStandard,
            &p,
            0.5,
            0.2,
            big_m,
            Some(3),
        )
        .unwrap();
        pl.k = pl.k.min(4);
        let a = run(&p, pl.estimator, &exact_solver(), &pl, 3, false).unwrap();
        let b = run(&p, pl.estimator, &exact_solver(), &pl, 3, false).unwrap();
        let predicted = predicted_complexity(&pl, 20, a.trace.jacobians_cached).unwrap();
        assert_eq!(a.trace.total_evals_g(), predicted.evals_g);
        assert_eq!(a.trace.total_evals_j(), predicted.evals_j);
        assert_eq!(a.x_final, b.x_final);
        let phis_a: Vec<f64> = a.trace.records.iter().map(|r| r.phi).collect();
        let phis_b: Vec<f64> = b.trace.records.iter().map(|r| r.phi).collect();
        assert_eq!(phis_a, phis_b);
        for w in a.trace.records.windows(2) {
            assert!(w[1].cum_evals_g >= w[0].cum_evals_g && w[1].cum_evals_j >= w[0].cum_evals_j);
        }
    }

    #[test]
    fn kind_mismatch_rejected() {
        let p = small_problem(5);
        let plan = explicit(
            EstimatorKind::Est1StandardVr,
            10.0,
            1,
            1,
            BatchPlan::uniform(2),
        );
        assert!(run(
            &p,
            EstimatorKind::Est0MiniBatch,
            &exact_solver(),
            &plan,
            0,
            false
        )
        .is_err());
    }

    #[test]
    fn success_metric_boundaries() {
        let plan = explicit(
            EstimatorKind::Est0MiniBatch,
            10.0,
            1,
            1,
            BatchPlan::uniform(1),
        );
        let rec = |v: Option<f64>| RunRecord {
            k: 0,
            i: 0,
            phi: 0.0,
            gen_grad_norm_sq: v,
            cum_evals_g: 0,
            cum_evals_j: 0,
            wall_ms: 0,
        };
        let mut trace = RunTrace {
            seed: 0,
            plan,
            epoch_lengths: vec![1],
            records: vec![rec(Some(0.25))],
            mean_gnorm2: Some(0.25),
            jacobians_cached: false,
        };
        assert!(success_metric(&trace, 0.25).unwrap());
        assert!(!success_metric(&trace, f64::from_bits(0.25f64.to_bits() - 1)).unwrap());
        trace.records = vec![rec(Some(0.0)); 3];
        assert!(success_metric(&trace, 1e-300).unwrap());
        trace.records.push(rec(None));
        assert!(matches!(
            success_metric(&trace, 1.0),
            Err(Error::MissingStationarity)
        ));
    }

    #[test]
    fn csv_layout() {
        let p = small_problem(4);
        let plan = explicit(
            EstimatorKind::Est0MiniBatch,
            6.0 * p.constants.big_l_g,
            2,
            1,
            BatchPlan::uniform(2),
        );
        let r = run(
            &p,
            EstimatorKind::Est0MiniBatch,
            &exact_solver(),
            &plan,
            0,
            true,
        )
        .unwrap();
        let mut buf = Vec::new();
        r.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1,0,"));
        assert_eq!(lines[2].split(',').count(), 7);
    }

    #[test]
    fn stationary_start_gives_zero_step() {
        let spec = ProblemSpec {
            noise: 0.0,
            start_radius: 0.0,
            ..ProblemSpec::regression(3, 4, 6, 2)
        };
        let p = build(&spec).unwrap();
        let plan = explicit(
            EstimatorKind::Est0MiniBatch,
            6.0 * p.constants.big_l_g,
            3,
            1,
            BatchPlan::uniform(1),
        );
        let audit = descent_audit(&p, &plan, 0).unwrap();
        for s in &audit.steps {
            assert!(s.step_sq < 1e-20);
            assert!(s.margin.abs() < 1e-9);
        }
    }
}
