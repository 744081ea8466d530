//! The strongly convex step subproblem and its solvers.
//!
//! `s(x) = f(g̃ + J̃(x − c)) + h(x) + (M/2)‖x − c‖²` with center `c`.
//! Every solver returns a [`SolveReport`]; deterministic solvers also return a
//! certified bound on `s(x_sol) − inf s`.

mod dual;
mod exact;
mod gradient;
mod stochastic;

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::composite::outer::OuterStructure;
use crate::composite::regularizer::RegularizerStructure;
use crate::composite::{CompositeProblem, OuterFunction, Regularizer, SampledOuter};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::estimators::EstimateBundle;
use crate::linalg::{op_norm, Matrix, Vector};

pub use stochastic::stochastic_step_count;

#[derive(Clone)]
pub struct SubproblemSpec {
    pub g_tilde: Vector,
    pub j_tilde: Matrix,
    pub center: Vector,
    pub big_m: f64,
    pub outer: Arc<dyn OuterFunction>,
    pub regularizer: Arc<dyn Regularizer>,
    pub sampled_outer: Option<Arc<dyn SampledOuter>>,
}

impl std::fmt::Debug for SubproblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubproblemSpec")
            .field("g_tilde", &self.g_tilde)
            .field("j_tilde", &self.j_tilde)
            .field("center", &self.center)
            .field("big_m", &self.big_m)
            .finish_non_exhaustive()
    }
}

impl SubproblemSpec {
    /// Subproblem around `center` with the given model data and the problem's `f`, `h`.
    pub fn from_problem(
        problem: &CompositeProblem,
        g_tilde: Vector,
        j_tilde: Matrix,
        center: Vector,
        big_m: f64,
    ) -> Result<Self> {
        check_dim("g_tilde", problem.dim_m, g_tilde.len())?;
        check_dim("J_tilde rows", problem.dim_m, j_tilde.nrows())?;
        check_dim("J_tilde cols", problem.dim_n, j_tilde.ncols())?;
        check_dim("center", problem.dim_n, center.len())?;
        check_finite("g_tilde", &g_tilde)?;
        check_finite("center", &center)?;
        if j_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("J_tilde"));
        }
        if !(big_m > 0.0 && big_m.is_finite()) {
            return Err(Error::InvalidSpec("M must be positive".into()));
        }
        Ok(Self {
            g_tilde,
            j_tilde,
            center,
            big_m,
            outer: problem.outer.clone(),
            regularizer: problem.regularizer.clone(),
            sampled_outer: problem.sampled_outer.clone(),
        })
    }

    /// `g̃ + J̃(x − c)`.
    pub fn inner_point(&self, x: &Vector) -> Vector {
        &self.g_tilde + &self.j_tilde * (x - &self.center)
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let d = x - &self.center;
        let hx = self.regularizer.value(x);
        if hx == f64::INFINITY {
            return f64::INFINITY;
        }
        self.outer.value(&self.inner_point(x)) + hx + 0.5 * self.big_m * d.norm_squared()
    }

    /// `J̃ᵀ ∂f(g̃ + J̃(x − c)) + M(x − c)`, an element of `∂s(x)` when `h = 0`
    /// (otherwise `∂h(x)` must be added).
    pub fn subgradient(&self, x: &Vector) -> Vector {
        let z = self.inner_point(x);
        self.j_tilde.transpose() * self.outer.subgradient(&z) + (x - &self.center) * self.big_m
    }

    pub fn dim_n(&self) -> usize {
        self.center.len()
    }
}

/// Subproblem for one algorithm step built from the step's estimates.
pub fn build_subproblem(
    bundle: &EstimateBundle,
    center: &Vector,
    big_m: f64,
    problem: &CompositeProblem,
) -> Result<SubproblemSpec> {
    SubproblemSpec::from_problem(
        problem,
        bundle.g_tilde.clone(),
        bundle.j_tilde.clone(),
        center.clone(),
        big_m,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    /// Closed form or direct linear algebra (smooth quadratic, affine, or
    /// Euclidean-norm outer function).
    ExactQuadratic,
    ProxGradient,
    AcceleratedProxGradient,
    StochasticProxSubgradient,
    /// Accelerated proximal method on the Fenchel dual; any `f` with a prox.
    DualAccelerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub kind: SolverKind,
    #[serde(default = "default_eps_bar")]
    pub eps_bar: f64,
    #[serde(default = "default_delta_bar")]
    pub delta_bar: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u64,
    /// `L_f`, the gradient Lipschitz constant of `f`; defaults to the one the
    /// outer function reports.
    #[serde(default)]
    pub smoothness: Option<f64>,
}

fn default_eps_bar() -> f64 {
    1e-8
}

fn default_delta_bar() -> f64 {
    0.01
}

fn default_max_iterations() -> u64 {
    1_000_000
}

impl SolverSpec {
    pub fn new(kind: SolverKind, eps_bar: f64, delta_bar: f64) -> Self {
        Self {
            kind,
            eps_bar,
            delta_bar,
            max_iterations: default_max_iterations(),
            smoothness: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_bar > 0.0) {
            return Err(Error::InvalidSpec("eps_bar must be positive".into()));
        }
        if !(self.delta_bar > 0.0 && self.delta_bar < 1.0) {
            return Err(Error::InvalidSpec("delta_bar must lie in (0,1)".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidSpec("max_iterations must be positive".into()));
        }
        if let Some(l) = self.smoothness {
            if !(l > 0.0) {
                return Err(Error::InvalidSpec("smoothness must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x_sol: Vector,
    /// Upper bound on `s(x_sol) − inf s`, when the solver can certify one.
    pub certified_gap: Option<f64>,
    pub iterations_used: u64,
    pub f_oracle_calls: u64,
}

/// Solve `spec` to the `(ε̄, δ̄)` contract of `solver`.
pub fn solve(
    spec: &SubproblemSpec,
    solver: &SolverSpec,
    rng: &mut dyn RngCore,
) -> Result<SolveReport> {
    solver.validate()?;
    match solver.kind {
        SolverKind::ExactQuadratic => exact::solve(spec, solver),
        SolverKind::ProxGradient => gradient::solve(spec, solver, false),
        SolverKind::AcceleratedProxGradient => gradient::solve(spec, solver, true),
        SolverKind::DualAccelerated => dual::solve(spec, solver.eps_bar, solver.max_iterations),
        SolverKind::StochasticProxSubgradient => stochastic::solve(spec, solver, rng),
    }
}

/// Certified solve to objective accuracy `tol` with the cheapest applicable
/// deterministic method.
pub fn reference_solve(spec: &SubproblemSpec, tol: f64) -> Result<SolveReport> {
    if exact::supports(spec) {
        let report = exact::solve_direct(spec)?;
        if report.certified_gap.is_some_and(|g| g <= tol) {
            return Ok(report);
        }
    }
    if let Some(l_f) = spec.outer.gradient_lipschitz() {
        let solver = SolverSpec {
            kind: SolverKind::AcceleratedProxGradient,
            eps_bar: tol,
            delta_bar: 0.5,
            max_iterations: 1_000_000,
            smoothness: Some(l_f.max(f64::MIN_POSITIVE)),
        };
        if let Ok(r) = gradient::solve(spec, &solver, true) {
            return Ok(r);
        }
    }
    dual::solve(spec, tol, 1_000_000)
}

/// `s(x) − s(reference.x_sol)`, clamped at zero.
pub fn certify_gap(spec: &SubproblemSpec, x: &Vector, reference: &SolveReport) -> f64 {
    (spec.value(x) - spec.value(&reference.x_sol)).max(0.0)
}

/// `‖J̃‖_op`.
pub(crate) fn jacobian_norm(spec: &SubproblemSpec) -> f64 {
    op_norm(&spec.j_tilde)
}

pub(crate) fn outer_structure(spec: &SubproblemSpec) -> OuterStructure<'_> {
    spec.outer.structure()
}

pub(crate) fn regularizer_structure(spec: &SubproblemSpec) -> RegularizerStructure<'_> {
    spec.regularizer.structure()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::outer::{Affine, EuclideanNorm, HalfSquaredNorm, HingePenalty};
    use crate::composite::regularizer::{Zero, L1};
    use crate::sampling::{Channel, RngStream};

    pub(crate) fn spec_with(
        outer: Arc<dyn OuterFunction>,
        regularizer: Arc<dyn Regularizer>,
        g: Vector,
        j: Matrix,
        center: Vector,
        big_m: f64,
    ) -> SubproblemSpec {
        SubproblemSpec {
            g_tilde: g,
            j_tilde: j,
            center,
            big_m,
            outer,
            regularizer,
            sampled_outer: None,
        }
    }

    fn hand_spec(kind_outer: Arc<dyn OuterFunction>) -> SubproblemSpec {
        spec_with(
            kind_outer,
            Arc::new(Zero),
            Vector::from_vec(vec![2.0, 0.0]),
            Matrix::identity(2, 2),
            Vector::zeros(2),
            3.0,
        )
    }

    fn rng() -> rand_chacha::ChaCha8Rng {
        RngStream::new(0).rng(Channel::Solver, 0, 0)
    }

    #[test]
    fn value_and_subgradient_by_hand() {
        let s = hand_spec(Arc::new(HalfSquaredNorm));
        assert!((s.value(&Vector::from_vec(vec![-0.5, 0.0])) - 1.5).abs() < 1e-15);
        assert_eq!(s.value(&s.center.clone()), 2.0);
        let lin = hand_spec(Arc::new(Affine::new(
            Vector::from_vec(vec![1.0, -2.0]),
            0.0,
        )));
        assert_eq!(
            lin.subgradient(&Vector::zeros(2)),
            Vector::from_vec(vec![1.0, -2.0])
        );
    }

    #[test]
    fn exact_quadratic_hand_solution() {
        let s = hand_spec(Arc::new(HalfSquaredNorm));
        let r = solve(
            &s,
            &SolverSpec::new(SolverKind::ExactQuadratic, 1e-9, 0.1),
            &mut rng(),
        )
        .unwrap();
        assert!((r.x_sol - Vector::from_vec(vec![-0.5, 0.0])).norm() < 1e-14);
        assert!(r.certified_gap.unwrap() <= 1e-12);
    }

    #[test]
    fn fixed_point_when_center_optimal() {
        // g̃ = 0 with f = ½‖·‖²: 0 ∈ ∂s(center)
        let mut s = hand_spec(Arc::new(HalfSquaredNorm));
        s.g_tilde = Vector::zeros(2);
        s.center = Vector::from_vec(vec![0.3, -0.2]);
        let r = solve(
            &s,
            &SolverSpec::new(SolverKind::ExactQuadratic, 1e-9, 0.1),
            &mut rng(),
        )
        .unwrap();
        assert!((r.x_sol - &s.center).norm() < 1e-14);
    }

    #[test]
    fn prox_gradient_agrees_with_exact() {
        let j = Matrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, 0.1]);
        let s = spec_with(
            Arc::new(HalfSquaredNorm),
            Arc::new(Zero),
            Vector::from_vec(vec![1.0, -1.0, 0.5]),
            j,
            Vector::from_vec(vec![0.2, 0.1]),
            2.0,
        );
        let exact = solve(
            &s,
            &SolverSpec::new(SolverKind::ExactQuadratic, 1e-12, 0.1),
            &mut rng(),
        )
        .unwrap();
        for kind in [
            SolverKind::ProxGradient,
            SolverKind::AcceleratedProxGradient,
            SolverKind::DualAccelerated,
        ] {
            let r = solve(&s, &SolverSpec::new(kind, 1e-8, 0.1), &mut rng()).unwrap();
            assert!(r.certified_gap.unwrap() <= 1e-8, "{kind:?}");
            let radius = (2.0 * 1e-8 / 2.0f64).sqrt();
            assert!(
                (&r.x_sol - &exact.x_sol).norm() <= radius + 1e-12,
                "{kind:?}"
            );
        }
    }

    #[test]
    fn gradient_solvers_reject_nonsmooth_outer() {
        let s = hand_spec(Arc::new(HingePenalty::new(1.0)));
        let r = solve(
            &s,
            &SolverSpec::new(SolverKind::ProxGradient, 1e-6, 0.1),
            &mut rng(),
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
        let r = solve(
            &s,
            &SolverSpec::new(SolverKind::ExactQuadratic, 1e-6, 0.1),
            &mut rng(),
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn norm_outer_exact_matches_dual() {
        let j = Matrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, 0.1]);
        for g in [
            vec![1.0, -1.0, 0.5],
            vec![0.01, 0.02, -0.01],
            vec![0.0, 0.0, 0.0],
        ] {
            let s = spec_with(
                Arc::new(EuclideanNorm::new(1.0)),
                Arc::new(Zero),
                Vector::from_vec(g),
                j.clone(),
                Vector::zeros(2),
                1.5,
            );
            let e = solve(
                &s,
                &SolverSpec::new(SolverKind::ExactQuadratic, 1e-10, 0.1),
                &mut rng(),
            )
            .unwrap();
            let d = solve(
                &s,
                &SolverSpec::new(SolverKind::DualAccelerated, 1e-10, 0.1),
                &mut rng(),
            )
            .unwrap();
            assert!(e.certified_gap.unwrap() <= 1e-10);
            assert!((s.value(&e.x_sol) - s.value(&d.x_sol)).abs() <= 2e-10);
        }
    }

    #[test]
    fn l1_regularized_dual_and_exact_fallback() {
        let j = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]);
        let s = spec_with(
            Arc::new(HalfSquaredNorm),
            Arc::new(L1::new(0.5)),
            Vector::from_vec(vec![1.0, -0.2]),
            j,
            Vector::zeros(2),
            1.0,
        );
        let e = solve(
            &s,
            &SolverSpec::new(SolverKind::ExactQuadratic, 1e-10, 0.1),
            &mut rng(),
        )
        .unwrap();
        let d = solve(
            &s,
            &SolverSpec::new(SolverKind::DualAccelerated, 1e-10, 0.1),
            &mut rng(),
        )
        .unwrap();
        assert!((s.value(&e.x_sol) - s.value(&d.x_sol)).abs() <= 2e-10);
    }

    #[test]
    fn certify_gap_is_definitional() {
        let s = hand_spec(Arc::new(HalfSquaredNorm));
        let r = solve(
            &s,
            &SolverSpec::new(SolverKind::ExactQuadratic, 1e-9, 0.1),
            &mut rng(),
        )
        .unwrap();
        assert_eq!(certify_gap(&s, &r.x_sol, &r), 0.0);
        let x = Vector::from_vec(vec![1.0, 1.0]);
        assert_eq!(certify_gap(&s, &x, &r), s.value(&x) - s.value(&r.x_sol));
    }

    #[test]
    fn invalid_solver_spec_rejected() {
        let s = hand_spec(Arc::new(HalfSquaredNorm));
        let bad = SolverSpec::new(SolverKind::ExactQuadratic, 0.0, 0.1);
        assert!(solve(&s, &bad, &mut rng()).is_err());
    }
}
