//! Solve prox-linear subproblems with every inner solver and compare objective values.

use std::sync::Arc;

use vrpl::composite::outer::{EuclideanNorm, HalfSquaredNorm};
use vrpl::composite::regularizer::L1;
use vrpl::composite::OuterFunction;
use vrpl::linalg::{Matrix, Vector};
use vrpl::sampling::{Channel, RngStream};
use vrpl::subproblem::{reference_solve, solve, SolverKind, SolverSpec, SubproblemSpec};

fn main() -> vrpl::Result<()> {
    let outers: [(&str, Arc<dyn OuterFunction>); 2] = [
        ("‖·‖", Arc::new(EuclideanNorm::default())),
        ("½‖·‖²", Arc::new(HalfSquaredNorm)),
    ];
    let mut rng = RngStream::new(9).rng(Channel::Solver, 0, 0);
    for (name, outer) in outers {
        let spec = SubproblemSpec {
            g_tilde: Vector::from_vec(vec![0.4, -0.2, 0.7]),
            j_tilde: Matrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64).sin()),
            center: Vector::from_vec(vec![0.3, -0.1, 0.2, 0.5]),
            big_m: 4.0,
            outer,
            regularizer: Arc::new(L1::new(0.05)),
            sampled_outer: None,
        };
        let best = spec.value(&reference_solve(&spec, 1e-12)?.x_sol);
        println!("f = {name}: reference value {best:.10}");
        for kind in [
            SolverKind::ExactQuadratic,
            SolverKind::DualAccelerated,
            SolverKind::ProxGradient,
            SolverKind::StochasticProxSubgradient,
        ] {
            match solve(&spec, &SolverSpec::new(kind, 1e-4, 0.05), &mut rng) {
                Ok(report) => println!(
                    "  {kind:?}: value − reference = {:.3e}, certificate = {:?}, iterations = {}",
                    spec.value(&report.x_sol) - best,
                    report.certified_gap,
                    report.iterations_used
                ),
                Err(e) => println!("  {kind:?}: {e}"),
            }
        }
    }
    Ok(())
}
