use crate::error::{Error, Result};
use crate::linalg::Vector;

use super::{jacobian_norm, SolveReport, SolverSpec, SubproblemSpec};

/// Proximal gradient on `s = φ + h` with `φ(x) = f(g̃ + J̃(x − c)) + (M/2)‖x − c‖²`.
///
/// Stops on the certificate `‖v‖²/(2M) ≤ ε̄` where
/// `v = L(y − x⁺) − ∇φ(y) + ∇φ(x⁺) ∈ ∂s(x⁺)`.
pub(super) fn solve(
    spec: &SubproblemSpec,
    solver: &SolverSpec,
    accelerated: bool,
) -> Result<SolveReport> {
    let l_f = solver
        .smoothness
        .or_else(|| spec.outer.gradient_lipschitz())
        .ok_or_else(|| {
            Error::Unsupported("gradient solvers need a smooth outer function".into())
        })?;
    let m = spec.big_m;
    let jn = jacobian_norm(spec);
    let big_l = l_f * jn * jn + m;
    let step = 1.0 / big_l;
    let momentum = if accelerated {
        (big_l.sqrt() - m.sqrt()) / (big_l.sqrt() + m.sqrt())
    } else {
        0.0
    };
    let jt = spec.j_tilde.transpose();
    let grad = |x: &Vector| -> Vector {
        &jt * spec.outer.subgradient(&spec.inner_point(x)) + (x - &spec.center) * m
    };

    let mut x = spec.center.clone();
    let mut y = x.clone();
    let mut gy = grad(&y);
    let mut calls = 1u64;
    for it in 1..=solver.max_iterations {
        let x_next = spec.regularizer.prox(&(&y - &gy * step), step);
        let g_next = grad(&x_next);
        calls += 1;
        let v = (&y - &x_next) * big_l - &gy + &g_next;
        let gap = v.norm_squared() / (2.0 * m);
        if gap <= solver.eps_bar {
            return Ok(SolveReport {
                x_sol: x_next,
                certified_gap: Some(gap),
                iterations_used: it,
                f_oracle_calls: calls,
            });
        }
        if accelerated {
            y = &x_next + (&x_next - &x) * momentum;
            gy = grad(&y);
            calls += 1;
        } else {
            y = x_next.clone();
            gy = g_next;
        }
        x = x_next;
    }
    Err(Error::SolverFailure(format!(
        "iteration cap {} reached without certifying {:e}",
        solver.max_iterations, solver.eps_bar
    )))
}
