use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::Vector;

use super::{jacobian_norm, SolveReport, SolverSpec, SubproblemSpec};

/// `⌈c/ε̄⌉·⌈1/δ̄⌉` with `c = 2(l·‖J̃‖)²/M`, where `l` bounds the sampled
/// subgradients of `f`.
///
/// The weighted-average iterate satisfies `E[s(x̄)] − inf s ≤ c/(T+1)`, so the
/// first factor gives ε̄ in expectation and Markov's inequality buys
/// probability `1 − δ̄` with the second.
pub fn stochastic_step_count(
    atom_lipschitz: f64,
    j_norm: f64,
    big_m: f64,
    eps_bar: f64,
    delta_bar: f64,
) -> u64 {
    let g = atom_lipschitz * j_norm;
    let c = 2.0 * g * g / big_m;
    let per_eps = (c / eps_bar).ceil().max(1.0);
    let boost = (1.0 / delta_bar).ceil().max(1.0);
    (per_eps * boost) as u64
}

/// Stochastic proximal subgradient with the strongly convex part
/// `ψ = h + (M/2)‖· − c‖²` handled by its prox; step `2/(M(t+1))`,
/// averaging with weights `t`.
pub(super) fn solve(
    spec: &SubproblemSpec,
    solver: &SolverSpec,
    rng: &mut dyn RngCore,
) -> Result<SolveReport> {
    let sampled = spec.sampled_outer.as_ref().ok_or_else(|| {
        Error::Unsupported(
            "StochasticProxSubgradient needs a problem with sampled outer pieces".into(),
        )
    })?;
    let m = spec.big_m;
    let steps = stochastic_step_count(
        sampled.atom_lipschitz(),
        jacobian_norm(spec),
        m,
        solver.eps_bar,
        solver.delta_bar,
    );
    if steps > solver.max_iterations {
        return Err(Error::SolverFailure(format!(
            "{steps} stochastic steps exceed the cap of {}",
            solver.max_iterations
        )));
    }
    let jt = spec.j_tilde.transpose();
    let mut x = spec.center.clone();
    let mut avg = Vector::zeros(x.len());
    let mut weight_sum = 0.0;
    for t in 1..=steps {
        let eta = 2.0 / (m * (t as f64 + 1.0));
        let zeta = sampled.sample_subgradient(&spec.inner_point(&x), rng);
        let u = &x - (&jt * zeta) * eta;
        // prox of η·ψ at u
        let shrink = 1.0 + eta * m;
        let anchor = (u + &spec.center * (eta * m)) / shrink;
        x = spec.regularizer.prox(&anchor, eta / shrink);
        let w = t as f64;
        weight_sum += w;
        avg.axpy(w / weight_sum, &(&x - &avg), 1.0);
    }
    Ok(SolveReport {
        x_sol: avg,
        certified_gap: None,
        iterations_used: steps,
        f_oracle_calls: steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count_formula() {
        // c = 2·(1·2)²/4 = 2 → ⌈2/1e-3⌉·⌈1/0.1⌉
        assert_eq!(stochastic_step_count(1.0, 2.0, 4.0, 1e-3, 0.1), 20_000);
        assert_eq!(stochastic_step_count(0.0, 2.0, 4.0, 1e-3, 0.3), 4);
    }
}
