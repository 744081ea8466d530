//! Draw randomized epoch lengths and plan with a uniform epoch distribution.

use vrpl::estimators::EstimatorKind;
use vrpl::planner::{draw_epochs, plan_with, EpochChoice, EpochDistribution, PlanOptions};
use vrpl::problems::{build, ProblemSpec};
use vrpl::sampling::RngStream;

fn main() -> vrpl::Result<()> {
    let dist = EpochDistribution::Uniform { tau_plus: 10 };
    let draws = 10_000u64;
    let mut lens = Vec::with_capacity(draws as usize);
    for seed in 0..draws {
        lens.push(draw_epochs(300, &dist, &RngStream::new(seed))?.len() as u64);
    }
    let mean = lens.iter().sum::<u64>() as f64 / draws as f64;
    let threshold = dist.k_tail_threshold(300);
    let tail = lens.iter().filter(|&&k| k > threshold).count() as f64 / draws as f64;
    println!(
        "S=300 τ₊=10: mean K = {mean:.2}, P(K > {threshold}) = {tail} (bound {:.2e})",
        dist.k_tail_bound(300)
    );

    let problem = build(&ProblemSpec {
        start_radius: 0.02,
        ..ProblemSpec::regression(20, 30, 200, 7)
    })?;
    let c = problem.constants;
    let opts = PlanOptions {
        epochs: EpochChoice::Uniform,
        ..PlanOptions::default()
    };
    let p = plan_with(
        EstimatorKind::Est1StandardVr,
        &problem,
        1e-2,
        0.1,
        6.0 * c.l_f * c.big_l_g,
        opts,
    )?;
    println!("{:?}", p.tau_schedule);
    println!(
        "Σ used for logs = {}, minimum steps = {}",
        p.sigma_tau(),
        p.sigma_tau_min()
    );
    Ok(())
}
