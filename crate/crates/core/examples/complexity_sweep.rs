//! Predicted oracle counts across accuracies and the fitted log-log slopes.

use vrpl::estimators::EstimatorKind;
use vrpl::planner::{
    ols_slope, plan, plan_log_factors, predicted_complexity, rate_exponents, CorrectedTarget,
};
use vrpl::problems::{build, ProblemSpec};

fn main() -> vrpl::Result<()> {
    let spec = ProblemSpec {
        start_radius: 0.02,
        ..ProblemSpec::regression(5, 4, 100_000, 8)
    };
    let problem = build(&spec)?;
    let c = problem.constants;
    let big_m = 6.0 * c.l_f * c.big_l_g;
    let eps_list = [3e-1, 1e-1, 3e-2, 1e-2];
    for kind in [
        EstimatorKind::Est0MiniBatch,
        EstimatorKind::Est1StandardVr,
        EstimatorKind::Est2CorrectedVr,
    ] {
        let mut xs = Vec::new();
        let (mut yg, mut yj) = (Vec::new(), Vec::new());
        for &eps in &eps_list {
            let p = plan(kind, &problem, eps, 0.1, big_m, None)?;
            let count = predicted_complexity(&p, 100_000, true)?;
            let (lg, lj) = plan_log_factors(&p, (problem.dim_m, problem.dim_n));
            println!(
                "{:<5} ε={eps:.0e} evals_g={} evals_J={}",
                kind.short_name(),
                count.evals_g,
                count.evals_j
            );
            xs.push(-eps.ln());
            yg.push((count.evals_g as f64 / lg).ln());
            yj.push((count.evals_j as f64 / lj).ln());
        }
        let expected = rate_exponents(kind, CorrectedTarget::Evaluations);
        println!(
            "{:<5} slopes {:.3}/{:.3}, rates {:.3}/{:.3}",
            kind.short_name(),
            ols_slope(&xs, &yg)?,
            ols_slope(&xs, &yj)?,
            expected.0,
            expected.1
        );
    }
    Ok(())
}
