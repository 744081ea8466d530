//! Empirical failure rate of the matrix Bernstein bound for averaged random matrices.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use vrpl::linalg::{op_norm, Matrix};
use vrpl::planner::{bernstein_bound, hoeffding_tail};
use vrpl::sampling::{Channel, RngStream};

fn main() -> vrpl::Result<()> {
    let (d1, d2) = (5, 4);
    let mut rng = RngStream::new(3).rng(Channel::Auxiliary(0), 0, 0);
    for delta in [0.01, 0.05, 0.2] {
        let n = 4 * bernstein_bound(1.0, 1, d1, d2, delta)?.n_min;
        let b = bernstein_bound(1.0, n, d1, d2, delta)?;
        let trials = 2_000;
        let mut fails = 0;
        for _ in 0..trials {
            let mut sum = Matrix::zeros(d1, d2);
            for _ in 0..n {
                let g = Matrix::from_fn(d1, d2, |_, _| StandardNormal.sample(&mut rng));
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                sum += g.clone() * (sign / op_norm(&g));
            }
            fails += usize::from(op_norm(&(sum / n as f64)) > b.bound);
        }
        println!(
            "δ={delta:<5} n={n:<4} bound={:.4} failure rate={:.4}",
            b.bound,
            fails as f64 / trials as f64
        );
    }
    let ranges = vec![(-1.0, 1.0); 100];
    println!(
        "Hoeffding tail for 100 terms in [-1,1] at t=20: {:.3e}",
        hoeffding_tail(&ranges, 20.0)?
    );
    Ok(())
}
