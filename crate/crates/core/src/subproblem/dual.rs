use crate::error::{Error, Result};
use crate::linalg::Vector;

use super::{jacobian_norm, SolveReport, SubproblemSpec};

/// Accelerated proximal gradient on the Fenchel dual of `s`.
///
/// With `ψ(x) = h(x) + (M/2)‖x − c‖²` and `x(λ) = prox_{h/M}(c − J̃ᵀλ/M)`,
/// the dual is `D(λ) = −f*(λ) + ⟨λ, g̃⟩ + ⟨J̃ᵀλ, x(λ) − c⟩ + ψ(x(λ))`.
/// The gap `s(x(λ)) − D(λ)` bounds primal suboptimality and is the stopping test.
pub(super) fn solve(spec: &SubproblemSpec, tol: f64, max_iterations: u64) -> Result<SolveReport> {
    let m = spec.big_m;
    let jt = spec.j_tilde.transpose();
    let x_of = |lam: &Vector| -> Vector {
        spec.regularizer
            .prox(&(&spec.center - &jt * lam / m), 1.0 / m)
    };
    // D(λ) without the −f*(λ) term, and the gradient of its negation
    let smooth_part = |lam: &Vector, x: &Vector| -> f64 {
        let d = x - &spec.center;
        lam.dot(&spec.g_tilde)
            + (&jt * lam).dot(&d)
            + spec.regularizer.value(x)
            + 0.5 * m * d.norm_squared()
    };

    let z0 = spec.g_tilde.clone();
    let mut lam = spec.outer.subgradient(&z0);
    let conj0 = lam.dot(&z0) - spec.outer.value(&z0);
    let mut x = x_of(&lam);
    let mut best_dual = -conj0 + smooth_part(&lam, &x);
    let mut best_x = x.clone();
    let mut best_primal = spec.value(&x);
    let mut calls = 1u64;

    let jn = jacobian_norm(spec);
    if jn == 0.0 {
        return Ok(SolveReport {
            certified_gap: Some((best_primal - best_dual).max(0.0)),
            x_sol: best_x,
            iterations_used: 0,
            f_oracle_calls: calls,
        });
    }
    let t = m / (jn * jn);

    let mut y = lam.clone();
    let mut theta = 1.0f64;
    for it in 1..=max_iterations {
        if best_primal - best_dual <= tol {
            return Ok(SolveReport {
                certified_gap: Some((best_primal - best_dual).max(0.0)),
                x_sol: best_x,
                iterations_used: it - 1,
                f_oracle_calls: calls,
            });
        }
        // ascent on the smooth part: ∇ = g̃ + J̃(x(y) − c)
        let xy = x_of(&y);
        let v = &y + (&spec.g_tilde + &spec.j_tilde * (&xy - &spec.center)) * t;
        // λ⁺ = prox_{t f*}(v) = v − t·prox_{f/t}(v/t), with f*(λ⁺) by Fenchel-Young
        let z = spec.outer.prox(&(&v / t), 1.0 / t);
        let lam_next = &v - &z * t;
        let conj = lam_next.dot(&z) - spec.outer.value(&z);
        calls += 1;
        x = x_of(&lam_next);
        let dual = -conj + smooth_part(&lam_next, &x);
        if dual > best_dual {
            best_dual = dual;
        }
        let primal = spec.value(&x);
        if primal < best_primal {
            best_primal = primal;
            best_x = x.clone();
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let restart = (&y - &lam_next).dot(&(&lam_next - &lam)) > 0.0;
        if restart {
            theta = 1.0;
            y = lam_next.clone();
        } else {
            y = &lam_next + (&lam_next - &lam) * ((theta - 1.0) / theta_next);
            theta = theta_next;
        }
        lam = lam_next;
    }
    if best_primal - best_dual <= tol {
        return Ok(SolveReport {
            certified_gap: Some((best_primal - best_dual).max(0.0)),
            x_sol: best_x,
            iterations_used: max_iterations,
            f_oracle_calls: calls,
        });
    }
    Err(Error::SolverFailure(format!(
        "dual method stalled at gap {:e} (target {tol:e})",
        best_primal - best_dual
    )))
}
