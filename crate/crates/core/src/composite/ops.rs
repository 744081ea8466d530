use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::subproblem::{self, SubproblemSpec};

use super::CompositeProblem;

/// `Φ(x) = f(g(x)) + h(x)`; `+∞` when `x ∉ dom h`.
pub fn phi_value(problem: &CompositeProblem, x: &Vector) -> Result<f64> {
    problem.check_point("x", x)?;
    let hx = problem.h_value(x);
    if hx == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(problem.f_value(&problem.g_value(x)) + hx)
}

/// `f(g_at + J_at(x − anchor)) + h(x) + (M/2)‖x − anchor‖²`.
pub fn model_value(
    problem: &CompositeProblem,
    anchor_x: &Vector,
    x: &Vector,
    g_at: &Vector,
    j_at: &Matrix,
    big_m: f64,
) -> Result<f64> {
    problem.check_point("anchor", anchor_x)?;
    problem.check_point("x", x)?;
    check_dim("g_at", problem.dim_m, g_at.len())?;
    check_dim("J_at rows", problem.dim_m, j_at.nrows())?;
    check_dim("J_at cols", problem.dim_n, j_at.ncols())?;
    if !(big_m > 0.0) {
        return Err(Error::InvalidSpec("M must be positive".into()));
    }
    let d = x - anchor_x;
    let z = g_at + j_at * &d;
    Ok(problem.f_value(&z) + problem.h_value(x) + 0.5 * big_m * d.norm_squared())
}

#[derive(Debug, Clone)]
pub struct GeneralizedGradient {
    /// `𝒢_M(x) = M(x − x̂₊)`.
    pub g_m: Vector,
    pub norm_sq: f64,
    pub x_plus: Vector,
    /// Certified objective accuracy of `x_plus`.
    pub certified_gap: f64,
}

/// Generalized gradient against the exact (or validation) `g`, `g'`.
///
/// `x̂₊` is accurate to `reference_tolerance` in objective, hence within
/// `√(2·tol/M)` of the true prox-linear point.
pub fn generalized_gradient(
    problem: &CompositeProblem,
    x: &Vector,
    big_m: f64,
    reference_tolerance: f64,
) -> Result<GeneralizedGradient> {
    problem.check_point("x", x)?;
    if !(reference_tolerance > 0.0) {
        return Err(Error::InvalidSpec(
            "reference tolerance must be positive".into(),
        ));
    }
    let (g, j) = problem.g_value_and_jacobian(x);
    let spec = SubproblemSpec::from_problem(problem, g, j, x.clone(), big_m)?;
    let report = subproblem::reference_solve(&spec, reference_tolerance)?;
    let gap = report.certified_gap.unwrap_or(f64::INFINITY);
    if !(gap <= reference_tolerance) {
        return Err(Error::SolverFailure(format!(
            "reference solver certified {gap:e}, needed {reference_tolerance:e}"
        )));
    }
    let g_m = (x - &report.x_sol) * big_m;
    let norm_sq = g_m.norm_squared();
    Ok(GeneralizedGradient {
        g_m,
        norm_sq,
        x_plus: report.x_sol,
        certified_gap: gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizationGap {
    pub gap: f64,
    pub bound: f64,
    pub violated: bool,
}

/// `|f(g(x)) − f(g(y) + g'(y)(x − y))|` against `(l_f L_g / 2)‖x − y‖²`.
pub fn linearization_gap(
    problem: &CompositeProblem,
    x: &Vector,
    y: &Vector,
) -> Result<LinearizationGap> {
    problem.check_point("x", x)?;
    problem.check_point("y", y)?;
    let gx = problem.g_value(x);
    let (gy, jy) = problem.g_value_and_jacobian(y);
    let d = x - y;
    let lin = gy + jy * &d;
    check_finite("linearization", &lin)?;
    let gap = (problem.f_value(&gx) - problem.f_value(&lin)).abs();
    let c = problem.constants;
    let bound = 0.5 * c.l_f * c.big_l_g * d.norm_squared();
    Ok(LinearizationGap {
        gap,
        bound,
        violated: gap > bound + 1e-9 * (1.0 + bound),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::composite::outer::{Affine, HalfSquaredNorm, HingePenalty};
    use crate::composite::regularizer::{BoxIndicator, Zero};
    use crate::composite::{FnComponents, LipschitzConstants, Population};

    fn consts(l_f: f64, big_l_g: f64) -> LipschitzConstants {
        LipschitzConstants {
            l_f,
            l_g: 1.0,
            big_l_g,
            sigma_g: 0.0,
            sigma_gprime: 0.0,
            lhat_g: 1.0,
            big_lhat_g: big_l_g,
        }
    }

    /// `g(x) = ½‖x‖²` on ℝ^n → ℝ.
    fn half_sq_norm(n: usize) -> FnComponents {
        FnComponents::new(n, 1).push(
            |x| Vector::from_element(1, 0.5 * x.norm_squared()),
            |x| Matrix::from_row_slice(1, x.len(), x.as_slice()),
        )
    }

    fn problem(
        outer: Arc<dyn crate::composite::OuterFunction>,
        comps: FnComponents,
        x0: Vector,
    ) -> CompositeProblem {
        let big_n = crate::composite::ComponentOracle::count(&comps);
        CompositeProblem::new(
            outer,
            Arc::new(Zero),
            Arc::new(comps),
            Population::FiniteSum { n: big_n },
            consts(1.0, 1.0),
            0.0,
            x0,
            0,
        )
        .unwrap()
    }

    #[test]
    fn phi_of_half_squared_norm() {
        let p = problem(
            Arc::new(Affine::identity_1d()),
            half_sq_norm(2),
            Vector::zeros(2),
        );
        assert_eq!(
            phi_value(&p, &Vector::from_vec(vec![3.0, 4.0])).unwrap(),
            12.5
        );
    }

    #[test]
    fn phi_of_hinge() {
        let comps = FnComponents::new(2, 2).push_affine(Matrix::identity(2, 2), Vector::zeros(2));
        let p = problem(Arc::new(HingePenalty::new(1.0)), comps, Vector::zeros(2));
        assert_eq!(
            phi_value(&p, &Vector::from_vec(vec![-1.0, 2.0])).unwrap(),
            2.0
        );
    }

    #[test]
    fn phi_rejects_non_finite_and_propagates_infinite_h() {
        let p = problem(
            Arc::new(Affine::identity_1d()),
            half_sq_norm(2),
            Vector::zeros(2),
        );
        assert!(phi_value(&p, &Vector::from_vec(vec![f64::NAN, 0.0])).is_err());
        let mut q = p.clone();
        q.regularizer = Arc::new(BoxIndicator {
            lower: Vector::zeros(2),
            upper: Vector::from_element(2, 1.0),
        });
        assert_eq!(
            phi_value(&q, &Vector::from_vec(vec![2.0, 0.0])).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn model_value_hand_evaluation() {
        let comps = FnComponents::new(2, 2).push_affine(Matrix::identity(2, 2), Vector::zeros(2));
        let p = problem(Arc::new(HalfSquaredNorm), comps, Vector::zeros(2));
        let v = model_value(
            &p,
            &Vector::zeros(2),
            &Vector::from_vec(vec![-0.5, 0.0]),
            &Vector::from_vec(vec![2.0, 0.0]),
            &Matrix::identity(2, 2),
            3.0,
        )
        .unwrap();
        assert!((v - 1.5).abs() < 1e-15);
    }

    #[test]
    fn model_value_constant_model() {
        let p = problem(
            Arc::new(Affine::identity_1d()),
            half_sq_norm(2),
            Vector::zeros(2),
        );
        let v = model_value(
            &p,
            &Vector::zeros(2),
            &Vector::from_vec(vec![0.6, 0.8]),
            &Vector::from_element(1, 5.0),
            &Matrix::zeros(1, 2),
            2.0,
        )
        .unwrap();
        assert!((v - 6.0).abs() < 1e-15);
    }

    #[test]
    fn generalized_gradient_for_linear_outer() {
        let p = problem(
            Arc::new(Affine::identity_1d()),
            half_sq_norm(2),
            Vector::zeros(2),
        );
        let gg = generalized_gradient(&p, &Vector::from_vec(vec![3.0, 4.0]), 10.0, 1e-12).unwrap();
        assert!((gg.g_m - Vector::from_vec(vec![3.0, 4.0])).norm() < 1e-9);
        assert!((gg.norm_sq - 25.0).abs() < 1e-8);
    }

    #[test]
    fn generalized_gradient_vanishes_at_constrained_minimizer() {
        // f linear, g(x) = x, h = indicator of [1,2]²: minimizer of x₁ + x₂ is (1,1)
        let comps = FnComponents::new(2, 2).push_affine(Matrix::identity(2, 2), Vector::zeros(2));
        let mut p = problem(
            Arc::new(Affine::new(Vector::from_element(2, 1.0), 0.0)),
            comps,
            Vector::from_element(2, 1.5),
        );
        p.regularizer = Arc::new(BoxIndicator {
            lower: Vector::from_element(2, 1.0),
            upper: Vector::from_element(2, 2.0),
        });
        let gg = generalized_gradient(&p, &Vector::from_element(2, 1.0), 4.0, 1e-12).unwrap();
        assert!(gg.norm_sq < 1e-12);
    }

    #[test]
    fn linearization_gap_tight_for_quadratic() {
        let p = problem(
            Arc::new(Affine::identity_1d()),
            half_sq_norm(1),
            Vector::zeros(1),
        );
        let r = linearization_gap(&p, &Vector::from_element(1, 1.0), &Vector::zeros(1)).unwrap();
        assert!((r.gap - 0.5).abs() < 1e-15);
        assert!((r.bound - 0.5).abs() < 1e-15);
        assert!(!r.violated);
        let same = linearization_gap(&p, &Vector::zeros(1), &Vector::zeros(1)).unwrap();
        assert_eq!((same.gap, same.bound), (0.0, 0.0));
    }
}
