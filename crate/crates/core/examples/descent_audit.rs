//! Run the method with exact oracles and check the sufficient-decrease inequality at every step.

use vrpl::driver::descent_audit;
use vrpl::estimators::EstimatorKind;
use vrpl::planner::plan;
use vrpl::problems::{build, ProblemSpec};

fn main() -> vrpl::Result<()> {
    let spec = ProblemSpec {
        start_radius: 1.0,
        ..ProblemSpec::regression(8, 10, 50, 2)
    };
    let problem = build(&spec)?;
    let c = problem.constants;
    let p = plan(
        EstimatorKind::Est3ExactAnchorStandard,
        &problem,
        1e-1,
        0.1,
        6.0 * c.l_f * c.big_l_g,
        None,
    )?;
    let audit = descent_audit(&problem, &p, 0)?;
    for (t, s) in audit.steps.iter().enumerate().take(10) {
        println!(
            "step {t:<3} Φ {:.6} → {:.6}  ‖Δx‖² = {:.3e}  margin = {:.3e}",
            s.phi_before, s.phi_after, s.step_sq, s.margin
        );
    }
    println!(
        "steps = {}, violations = {}, worst margin = {:.3e}",
        audit.steps.len(),
        audit.violations,
        audit.worst_margin
    );
    Ok(())
}
