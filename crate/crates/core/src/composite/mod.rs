//! The composite objective `Φ(x) = f(g(x)) + h(x)` and its primitives.
//!
//! `g` is either a finite average `(1/N) Σ_j g_j` or an expectation over a
//! hidden population; the problem owns the component oracles, the outer
//! function `f`, the regularizer `h`, and the declared constants.

mod ops;
pub mod outer;
pub mod regularizer;

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::parallel;
use crate::sampling::{draw_batch, Batch, Channel, RngStream, SamplingMode};

pub use ops::{
    generalized_gradient, linearization_gap, model_value, phi_value, GeneralizedGradient,
    LinearizationGap,
};
pub use outer::OuterFunction;
pub use regularizer::Regularizer;

/// Component maps `g_j : ℝ^n → ℝ^m`, `j ∈ 0..count()`.
pub trait ComponentOracle: Send + Sync + fmt::Debug {
    fn count(&self) -> usize;

    /// `(n, m)`.
    fn dims(&self) -> (usize, usize);

    fn value(&self, j: usize, x: &Vector) -> Vector;

    fn jacobian(&self, j: usize, x: &Vector) -> Matrix;

    fn value_and_jacobian(&self, j: usize, x: &Vector) -> (Vector, Matrix) {
        (self.value(j, x), self.jacobian(j, x))
    }
}

/// Sample access to `f = E_ζ f_ζ`, used only by stochastic subproblem solvers.
pub trait SampledOuter: Send + Sync + fmt::Debug {
    /// Draw `ζ` and return an element of `∂f_ζ(z)`.
    fn sample_subgradient(&self, z: &Vector, rng: &mut dyn RngCore) -> Vector;

    /// Draw `ζ` and return `f_ζ(z)`.
    fn sample_value(&self, z: &Vector, rng: &mut dyn RngCore) -> f64;

    /// Uniform bound on `‖∂f_ζ‖`.
    fn atom_lipschitz(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Population {
    FiniteSum {
        n: usize,
    },
    /// The components form a large hidden population; `g` is evaluated on a
    /// fixed validation batch of this size.
    Expectation {
        validation_batch: usize,
    },
}

/// Declared constants. Hat constants bound single components, plain ones the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    pub l_f: f64,
    pub l_g: f64,
    #[serde(rename = "L_g")]
    pub big_l_g: f64,
    pub sigma_g: f64,
    pub sigma_gprime: f64,
    pub lhat_g: f64,
    #[serde(rename = "Lhat_g")]
    pub big_lhat_g: f64,
}

impl LipschitzConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("l_f", self.l_f),
            ("l_g", self.l_g),
            ("L_g", self.big_l_g),
            ("sigma_g", self.sigma_g),
            ("sigma_gprime", self.sigma_gprime),
            ("lhat_g", self.lhat_g),
            ("Lhat_g", self.big_lhat_g),
        ];
        for (name, v) in all {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "constant {name} must be nonnegative"
                )));
            }
        }
        if self.big_l_g <= 0.0 {
            return Err(Error::InvalidSpec("constant L_g must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: Vector,
    pub epoch_k: usize,
    pub inner_i: usize,
}

#[derive(Clone)]
pub struct CompositeProblem {
    pub dim_n: usize,
    pub dim_m: usize,
    pub outer: Arc<dyn OuterFunction>,
    pub regularizer: Arc<dyn Regularizer>,
    pub components: Arc<dyn ComponentOracle>,
    pub sampled_outer: Option<Arc<dyn SampledOuter>>,
    pub population: Population,
    pub constants: LipschitzConstants,
    pub phi_lower_bound: f64,
    /// Default starting point `x₀⁰`.
    pub initial_point: Vector,
    reference: Arc<Vec<(usize, f64)>>,
}

impl fmt::Debug for CompositeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompositeProblem")
            .field("dim_n", &self.dim_n)
            .field("dim_m", &self.dim_m)
            .field("outer", &self.outer)
            .field("regularizer", &self.regularizer)
            .field("population", &self.population)
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

impl CompositeProblem {
    /// Assemble a problem. In expectation mode the validation batch is drawn
    /// once from `validation_seed`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        outer: Arc<dyn OuterFunction>,
        regularizer: Arc<dyn Regularizer>,
        components: Arc<dyn ComponentOracle>,
        population: Population,
        constants: LipschitzConstants,
        phi_lower_bound: f64,
        initial_point: Vector,
        validation_seed: u64,
    ) -> Result<Self> {
        let (n, m) = components.dims();
        if n == 0 || m == 0 {
            return Err(Error::InvalidSpec("dimensions must be positive".into()));
        }
        check_dim("initial point", n, initial_point.len())?;
        check_finite("initial point", &initial_point)?;
        constants.validate()?;
        let count = components.count();
        if count == 0 {
            return Err(Error::InvalidSpec("empty component population".into()));
        }
        let reference = match population {
            Population::FiniteSum { n: big_n } => {
                if big_n != count {
                    return Err(Error::DimensionMismatch {
                        what: "population",
                        expected: big_n.to_string(),
                        got: count.to_string(),
                    });
                }
                let w = 1.0 / count as f64;
                (0..count).map(|j| (j, w)).collect()
            }
            Population::Expectation { validation_batch } => {
                if validation_batch == 0 {
                    return Err(Error::InvalidSpec(
                        "validation batch must be positive".into(),
                    ));
                }
                if validation_batch >= count {
                    let w = 1.0 / count as f64;
                    (0..count).map(|j| (j, w)).collect()
                } else {
                    let mut rng = RngStream::new(validation_seed).rng(Channel::Validation, 0, 0);
                    draw_batch(
                        count,
                        validation_batch as u64,
                        SamplingMode::WithReplacement,
                        &mut rng,
                    )
                    .weights()
                    .collect()
                }
            }
        };
        Ok(Self {
            dim_n: n,
            dim_m: m,
            outer,
            regularizer,
            components,
            sampled_outer: None,
            population,
            constants,
            phi_lower_bound,
            initial_point,
            reference: Arc::new(reference),
        })
    }

    pub fn with_sampled_outer(mut self, sampled: Arc<dyn SampledOuter>) -> Self {
        self.sampled_outer = Some(sampled);
        self
    }

    pub fn with_initial_point(mut self, x0: Vector) -> Result<Self> {
        check_dim("initial point", self.dim_n, x0.len())?;
        check_finite("initial point", &x0)?;
        self.initial_point = x0;
        Ok(self)
    }

    pub fn with_constants(mut self, constants: LipschitzConstants) -> Result<Self> {
        constants.validate()?;
        self.constants = constants;
        Ok(self)
    }

    pub fn is_finite_sum(&self) -> bool {
        matches!(self.population, Population::FiniteSum { .. })
    }

    /// Size of the population batches are drawn from.
    pub fn population_size(&self) -> usize {
        self.components.count()
    }

    pub fn f_value(&self, z: &Vector) -> f64 {
        self.outer.value(z)
    }

    pub fn f_subgradient(&self, z: &Vector) -> Vector {
        self.outer.subgradient(z)
    }

    pub fn h_value(&self, x: &Vector) -> f64 {
        self.regularizer.value(x)
    }

    pub fn h_prox(&self, x: &Vector, t: f64) -> Vector {
        self.regularizer.prox(x, t)
    }

    pub fn g_component(&self, j: usize, x: &Vector) -> Vector {
        self.components.value(j, x)
    }

    pub fn g_jacobian(&self, j: usize, x: &Vector) -> Matrix {
        self.components.jacobian(j, x)
    }

    /// Uniform with-replacement batch of `size` component ids.
    pub fn sample_batch(&self, size: u64, mode: SamplingMode, rng: &mut dyn RngCore) -> Batch {
        draw_batch(self.population_size(), size, mode, rng)
    }

    /// Weighted indices defining the reference `g`: all of them in finite-sum
    /// mode, the validation batch otherwise.
    pub fn reference_weights(&self) -> &[(usize, f64)] {
        &self.reference
    }

    /// `g(x)` (exact in finite-sum mode, validation estimate otherwise).
    pub fn g_value(&self, x: &Vector) -> Vector {
        parallel::weighted_vector_sum(&self.reference, self.dim_m, |j| self.g_component(j, x))
    }

    /// `g'(x)`, with the same convention as [`Self::g_value`].
    pub fn g_jacobian_mean(&self, x: &Vector) -> Matrix {
        parallel::weighted_matrix_sum(&self.reference, self.dim_m, self.dim_n, |j| {
            self.g_jacobian(j, x)
        })
    }

    pub fn g_value_and_jacobian(&self, x: &Vector) -> (Vector, Matrix) {
        parallel::weighted_pair_sum(&self.reference, self.dim_m, self.dim_m, self.dim_n, |j| {
            self.components.value_and_jacobian(j, x)
        })
    }

    pub(crate) fn check_point(&self, what: &'static str, x: &Vector) -> Result<()> {
        check_dim(what, self.dim_n, x.len())?;
        check_finite(what, x)
    }
}

/// A small explicit component family, handy for examples and tests.
pub struct FnComponents {
    n: usize,
    m: usize,
    #[allow(clippy::type_complexity)]
    values: Vec<Box<dyn Fn(&Vector) -> Vector + Send + Sync>>,
    #[allow(clippy::type_complexity)]
    jacobians: Vec<Box<dyn Fn(&Vector) -> Matrix + Send + Sync>>,
}

impl fmt::Debug for FnComponents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnComponents")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("count", &self.values.len())
            .finish()
    }
}

impl FnComponents {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            values: Vec::new(),
            jacobians: Vec::new(),
        }
    }

    pub fn push(
        mut self,
        value: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        jacobian: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.values.push(Box::new(value));
        self.jacobians.push(Box::new(jacobian));
        self
    }

    /// Affine component `x ↦ Ax + b`.
    pub fn push_affine(self, a: Matrix, b: Vector) -> Self {
        let a2 = a.clone();
        self.push(move |x| &a * x + &b, move |_| a2.clone())
    }
}

impl ComponentOracle for FnComponents {
    fn count(&self) -> usize {
        self.values.len()
    }

    fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    fn value(&self, j: usize, x: &Vector) -> Vector {
        (self.values[j])(x)
    }

    fn jacobian(&self, j: usize, x: &Vector) -> Matrix {
        (self.jacobians[j])(x)
    }
}

#[cfg(test)]
mod tests {
    use super::outer::{Affine, HingePenalty};
    use super::regularizer::Zero;
    use super::*;

    pub(crate) fn scalar_pair() -> CompositeProblem {
        // g₁(x) = x, g₂(x) = 3x
        let comps = FnComponents::new(1, 1)
            .push_affine(Matrix::from_element(1, 1, 1.0), Vector::zeros(1))
            .push_affine(Matrix::from_element(1, 1, 3.0), Vector::zeros(1));
        CompositeProblem::new(
            Arc::new(Affine::identity_1d()),
            Arc::new(Zero),
            Arc::new(comps),
            Population::FiniteSum { n: 2 },
            LipschitzConstants {
                l_f: 1.0,
                l_g: 2.0,
                big_l_g: 1e-12,
                sigma_g: f64::INFINITY,
                sigma_gprime: 1.0,
                lhat_g: 3.0,
                big_lhat_g: 0.0,
            },
            f64::NEG_INFINITY,
            Vector::from_element(1, 1.0),
            0,
        )
        .unwrap()
    }

    #[test]
    fn finite_sum_mean_is_hand_average() {
        let p = scalar_pair();
        let x = Vector::from_element(1, 2.0);
        assert_eq!(p.g_value(&x)[0], 4.0);
        assert_eq!(p.g_jacobian_mean(&x)[(0, 0)], 2.0);
    }

    #[test]
    fn population_count_must_match() {
        let comps = FnComponents::new(1, 1).push_affine(Matrix::identity(1, 1), Vector::zeros(1));
        let err = CompositeProblem::new(
            Arc::new(HingePenalty::new(1.0)),
            Arc::new(Zero),
            Arc::new(comps),
            Population::FiniteSum { n: 3 },
            scalar_pair().constants,
            0.0,
            Vector::zeros(1),
            0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn negative_constant_rejected() {
        let mut c = scalar_pair().constants;
        c.l_f = -1.0;
        assert!(c.validate().is_err());
    }
}
