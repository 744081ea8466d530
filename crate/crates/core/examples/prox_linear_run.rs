//! Plan and run the variance-reduced prox-linear method on a nonlinear regression
//! instance, tracing the generalized-gradient norm at every iterate.

use std::time::Instant;

use vrpl::driver::run;
use vrpl::estimators::EstimatorKind;
use vrpl::planner::plan;
use vrpl::problems::{build, ProblemSpec};
use vrpl::subproblem::{SolverKind, SolverSpec};

fn main() -> vrpl::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(7);
    let spec = ProblemSpec {
        start_radius: 0.02,
        ..ProblemSpec::regression(20, 30, 200, 7)
    };
    let problem = build(&spec)?;
    let c = problem.constants;
    let big_m = 6.0 * c.l_f * c.big_l_g;
    let kind = EstimatorKind::Est3ExactAnchorStandard;
    let p = plan(kind, &problem, 1e-2, 0.1, big_m, None)?;
    let solver = SolverSpec::new(SolverKind::ExactQuadratic, p.eps_bar, p.delta_bar);
    let t = Instant::now();
    let result = run(&problem, kind, &solver, &p, seed, true)?;
    let trace = &result.trace;
    for r in trace
        .records
        .iter()
        .step_by((trace.records.len() / 10).max(1))
    {
        println!(
            "k={:<5} i={} Φ={:.6e} ‖G‖²={:.3e} evals_g={}",
            r.k,
            r.i,
            r.phi,
            r.gen_grad_norm_sq.unwrap_or(f64::NAN),
            r.cum_evals_g
        );
    }
    println!(
        "iterations={} mean ‖G‖²={:.4e} target={:.1e} success={:?} elapsed={:.2?}",
        trace.records.len(),
        trace.mean_gnorm2.unwrap_or(f64::NAN),
        p.target_eps,
        result.success,
        t.elapsed()
    );
    Ok(())
}
