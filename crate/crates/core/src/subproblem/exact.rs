use crate::composite::outer::OuterStructure;
use crate::composite::regularizer::RegularizerStructure;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

use super::{
    gradient, outer_structure, regularizer_structure, SolveReport, SolverKind, SolverSpec,
    SubproblemSpec,
};

pub(super) fn supports(spec: &SubproblemSpec) -> bool {
    matches!(
        (outer_structure(spec), regularizer_structure(spec)),
        (OuterStructure::Affine { .. }, _)
            | (OuterStructure::HalfSquaredNorm, RegularizerStructure::Zero)
            | (
                OuterStructure::HalfSquaredNorm,
                RegularizerStructure::Quadratic { .. }
            )
            | (
                OuterStructure::EuclideanNorm { .. },
                RegularizerStructure::Zero
            )
    )
}

pub(super) fn solve(spec: &SubproblemSpec, solver: &SolverSpec) -> Result<SolveReport> {
    if supports(spec) {
        return solve_direct(spec);
    }
    match outer_structure(spec) {
        // smooth quadratic f with a non-quadratic h: no joint closed form
        OuterStructure::HalfSquaredNorm => {
            let fallback = SolverSpec {
                kind: SolverKind::AcceleratedProxGradient,
                smoothness: Some(1.0),
                ..*solver
            };
            gradient::solve(spec, &fallback, true)
        }
        _ => Err(Error::Unsupported(
            "ExactQuadratic needs an affine, half-squared-norm, or Euclidean-norm outer function \
             with a zero or quadratic regularizer"
                .into(),
        )),
    }
}

pub(super) fn solve_direct(spec: &SubproblemSpec) -> Result<SolveReport> {
    match outer_structure(spec) {
        OuterStructure::Affine { slope, .. } => Ok(affine(spec, slope)),
        OuterStructure::HalfSquaredNorm => half_squared(spec),
        OuterStructure::EuclideanNorm { scale } => Ok(norm(spec, scale)),
        OuterStructure::General => Err(Error::Unsupported("no closed form".into())),
    }
}

fn report(x_sol: Vector, gap: f64) -> SolveReport {
    SolveReport {
        x_sol,
        certified_gap: Some(gap.max(0.0)),
        iterations_used: 1,
        f_oracle_calls: 0,
    }
}

/// Residual-based bound `‖∇s(x)‖²/(2M)` for quadratic-plus-smooth `h`.
fn residual_gap(spec: &SubproblemSpec, grad_f_part: Vector, x: &Vector) -> Option<f64> {
    let h_grad = match regularizer_structure(spec) {
        RegularizerStructure::Zero => Vector::zeros(x.len()),
        RegularizerStructure::Quadratic { hessian, linear } => hessian * x + linear,
        RegularizerStructure::General => return None,
    };
    let grad = grad_f_part + h_grad + (x - &spec.center) * spec.big_m;
    Some(grad.norm_squared() / (2.0 * spec.big_m))
}

fn affine(spec: &SubproblemSpec, slope: &Vector) -> SolveReport {
    let jt_w = spec.j_tilde.transpose() * slope;
    let x = spec
        .regularizer
        .prox(&(&spec.center - &jt_w / spec.big_m), 1.0 / spec.big_m);
    let gap = residual_gap(spec, jt_w, &x).unwrap_or(0.0);
    report(x, gap)
}

fn half_squared(spec: &SubproblemSpec) -> Result<SolveReport> {
    let n = spec.dim_n();
    let j = &spec.j_tilde;
    let jt = j.transpose();
    let mut h = &jt * j + Matrix::identity(n, n) * spec.big_m;
    // solve for d = x − center
    let mut rhs = -(&jt * &spec.g_tilde);
    if let RegularizerStructure::Quadratic { hessian, linear } = regularizer_structure(spec) {
        h += hessian;
        rhs -= hessian * &spec.center + linear;
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::SolverFailure("normal equations not positive definite".into()))?;
    let d = chol.solve(&rhs);
    let x = &spec.center + &d;
    let grad_f = &jt * spec.inner_point(&x);
    let gap = residual_gap(spec, grad_f, &x).unwrap_or(f64::INFINITY);
    Ok(report(x, gap))
}

/// `min_x scale·‖c + J(x − a)‖ + (M/2)‖x − a‖²` through the SVD of `J`.
///
/// With `d = x − a`, optimality reads `d(μ) = −(JᵀJ + μM)⁻¹Jᵀc` where
/// `μ = ‖c + Jd‖/scale`; `μ` is the root of a monotone secular function, and
/// `μ = 0` is the kink case `c + Jd = 0`.
fn norm(spec: &SubproblemSpec, scale: f64) -> SolveReport {
    let n = spec.dim_n();
    let c = &spec.g_tilde;
    let m = spec.big_m;
    if scale == 0.0 {
        return report(spec.center.clone(), 0.0);
    }
    let svd = spec.j_tilde.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors");
    let v_t = svd.v_t.as_ref().expect("right singular vectors");
    let sig = &svd.singular_values;
    let smax = sig.max();
    let c1_all = u.transpose() * c;
    let keep: Vec<usize> = (0..sig.len())
        .filter(|&i| sig[i] > 1e-13 * smax.max(1e-300))
        .collect();
    let c1: Vec<f64> = keep.iter().map(|&i| c1_all[i]).collect();
    let s: Vec<f64> = keep.iter().map(|&i| sig[i]).collect();
    let in_range: f64 = c1.iter().map(|v| v * v).sum();
    let resid_sq = (c.norm_squared() - in_range).max(0.0);

    let step_of = |mu: f64| -> Vector {
        let mut coords = Vector::zeros(sig.len());
        for (k, &i) in keep.iter().enumerate() {
            coords[i] = -s[k] * c1[k] / (s[k] * s[k] + mu * m);
        }
        v_t.transpose() * coords
    };

    let kink_norm_sq: f64 = c1
        .iter()
        .zip(&s)
        .map(|(ci, si)| (m * ci / (si * si)).powi(2))
        .sum();
    let tiny_resid = resid_sq <= 1e-28 * c.norm_squared().max(1e-300);
    let d = if tiny_resid && kink_norm_sq <= scale * scale {
        step_of(0.0)
    } else {
        // F(μ) = Σ (M cᵢ/(σᵢ² + μM))² + r²/μ² − scale², decreasing in μ
        let secular = |mu: f64| -> f64 {
            let mut acc = resid_sq / (mu * mu);
            for (ci, si) in c1.iter().zip(&s) {
                acc += (m * ci / (si * si + mu * m)).powi(2);
            }
            acc - scale * scale
        };
        let mut lo = 0.0;
        let mut hi = c.norm() / scale * (1.0 + 1e-12) + 1e-300;
        while secular(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if secular(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        step_of(0.5 * (lo + hi))
    };
    let x = &spec.center + &d;

    // dual certificate: λ ∈ ∂f at the model point, D(λ) = ⟨λ,c⟩ − ‖Jᵀλ‖²/(2M)
    let y = c + &spec.j_tilde * &d;
    let yn = y.norm();
    let lambda = if yn > 1e-14 * c.norm().max(1e-300) {
        y * (scale / yn)
    } else {
        let mut coords = Vector::zeros(u.ncols());
        for (k, &i) in keep.iter().enumerate() {
            coords[i] = m * c1[k] / (s[k] * s[k]);
        }
        let lam = u * coords;
        let ln = lam.norm();
        if ln > scale {
            lam * (scale / ln)
        } else {
            lam
        }
    };
    let jt_l = spec.j_tilde.transpose() * &lambda;
    let dual = lambda.dot(c) - jt_l.norm_squared() / (2.0 * m);
    // the dual point also induces a primal candidate
    let x_dual = &spec.center - &jt_l / m;
    let (x_best, p_best) = {
        let p0 = spec.value(&x);
        let p1 = spec.value(&x_dual);
        if p1 < p0 {
            (x_dual, p1)
        } else {
            (x, p0)
        }
    };
    debug_assert!(n == x_best.len());
    report(x_best, p_best - dual)
}
