//! Monte-Carlo check that every estimator is unbiased for `g` and `g'`.

use vrpl::estimators::{unbiasedness_probe, AnchorMode, BatchPlan, Estimator, EstimatorKind};
use vrpl::problems::{build, ProblemSpec};
use vrpl::sampling::RngStream;

fn main() -> vrpl::Result<()> {
    let trials: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2_000);
    let problem = build(&ProblemSpec::regression(10, 12, 100, 1))?;
    let x0 = problem.initial_point.clone();
    let x = x0.map(|v| v * 0.9);
    let (g, j) = problem.g_value_and_jacobian(&x);
    for kind in EstimatorKind::ALL {
        let est = Estimator::new(kind, BatchPlan::uniform(4));
        let stream = RngStream::new(kind as u64);
        let (anchor, _) = est.begin_epoch(&problem, &x0, &stream, 0)?;
        let probe = unbiasedness_probe(
            &est,
            &problem,
            &anchor,
            &x,
            trials,
            &stream,
            AnchorMode::Redraw,
        )?;
        println!(
            "{:<5} |mean g̃ − g| = {:.3e} (stderr {:.3e})  |mean J̃ − g'|_F = {:.3e} (stderr {:.3e})",
            kind.short_name(),
            (&probe.mean_g - &g).norm(),
            probe.stderr_g,
            (&probe.mean_j - &j).norm(),
            probe.stderr_j
        );
    }
    Ok(())
}
