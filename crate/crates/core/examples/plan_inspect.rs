//! Plan every estimator for a regression instance and print the condition margins.

use vrpl::estimators::EstimatorKind;
use vrpl::planner::{phi_gap, plan, validate_plan};
use vrpl::problems::{build, ProblemSpec};

fn main() -> vrpl::Result<()> {
    let radius: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.05);
    let eps: f64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1e-2);
    let spec = ProblemSpec {
        start_radius: radius,
        ..ProblemSpec::regression(20, 30, 200, 7)
    };
    let problem = build(&spec)?;
    let c = problem.constants;
    let big_m = 6.0 * c.l_f * c.big_l_g;
    println!("constants: {c:?}");
    println!("M = {big_m:.4}, Φ(x₀) − Φ_low = {:.5}", phi_gap(&problem)?);
    for kind in EstimatorKind::ALL {
        match plan(kind, &problem, eps, 0.1, big_m, None) {
            Ok(p) => {
                let report = validate_plan(&p, &problem)?;
                println!(
                    "{:<5} τ={:<3} K={:<7} Σ={:<8} θ={:?} pass={}",
                    kind.short_name(),
                    p.tau_schedule.tau_max(),
                    p.k,
                    p.sigma_tau(),
                    p.batch_plan,
                    report.pass
                );
            }
            Err(e) => println!("{:<5} {e}", kind.short_name()),
        }
    }
    Ok(())
}
