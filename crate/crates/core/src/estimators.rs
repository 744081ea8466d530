//! Estimators of `(g(x), g'(x))` with exact oracle accounting.
//!
//! | kind | anchor `(i = 0)` | inner step `(i ≥ 1)` |
//! |------|------------------|----------------------|
//! | Est0 | none             | `A` values, `B` Jacobians at `x` |
//! | Est1 | `A`, `B` at `x₀` | `2a` values, `2b` Jacobians |
//! | Est2 | `A`, `B` at `x₀` | `2a` values, `a + 2b` Jacobians |
//! | Est3 | `N`, `N` exact   | `a` values, `b` Jacobians |
//! | Est4 | `N`, `N` exact   | `a` values, `b` Jacobians |
//!
//! Est3/Est4 keep the anchor's component values (and Jacobians, if they fit
//! under the cache limit) so anchor terms are free during the epoch. Without
//! the Jacobian cache those terms are recomputed and counted.

use serde::{Deserialize, Serialize};

use crate::composite::CompositeProblem;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::parallel::{weighted_matrix_sum, weighted_vector_sum};
use crate::sampling::{Batch, Channel, RngStream, SamplingMode};

/// Default anchor cache budget, in `f64`s.
pub const DEFAULT_CACHE_LIMIT: usize = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "Est0_MiniBatch", alias = "Est0")]
    Est0MiniBatch,
    #[serde(rename = "Est1_StandardVR", alias = "Est1")]
    Est1StandardVr,
    #[serde(rename = "Est2_CorrectedVR", alias = "Est2")]
    Est2CorrectedVr,
    #[serde(rename = "Est3_ExactAnchorStandard", alias = "Est3")]
    Est3ExactAnchorStandard,
    #[serde(rename = "Est4_ExactAnchorCorrected", alias = "Est4")]
    Est4ExactAnchorCorrected,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Est0MiniBatch,
        EstimatorKind::Est1StandardVr,
        EstimatorKind::Est2CorrectedVr,
        EstimatorKind::Est3ExactAnchorStandard,
        EstimatorKind::Est4ExactAnchorCorrected,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            EstimatorKind::Est0MiniBatch => "Est0",
            EstimatorKind::Est1StandardVr => "Est1",
            EstimatorKind::Est2CorrectedVr => "Est2",
            EstimatorKind::Est3ExactAnchorStandard => "Est3",
            EstimatorKind::Est4ExactAnchorCorrected => "Est4",
        }
    }

    pub fn is_anchored(self) -> bool {
        !matches!(self, EstimatorKind::Est0MiniBatch)
    }

    pub fn has_exact_anchor(self) -> bool {
        matches!(
            self,
            EstimatorKind::Est3ExactAnchorStandard | EstimatorKind::Est4ExactAnchorCorrected
        )
    }

    /// Uses the first-order correction `g'_ξ(x₀)(x − x₀)` in the value estimate.
    pub fn is_corrected(self) -> bool {
        matches!(
            self,
            EstimatorKind::Est2CorrectedVr | EstimatorKind::Est4ExactAnchorCorrected
        )
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Batch sizes `θ = (A, B, a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    #[serde(rename = "A")]
    pub big_a: u64,
    #[serde(rename = "B")]
    pub big_b: u64,
    #[serde(rename = "a")]
    pub small_a: u64,
    #[serde(rename = "b")]
    pub small_b: u64,
}

impl BatchPlan {
    pub fn new(big_a: u64, big_b: u64, small_a: u64, small_b: u64) -> Self {
        Self {
            big_a,
            big_b,
            small_a,
            small_b,
        }
    }

    pub fn uniform(size: u64) -> Self {
        Self::new(size, size, size, size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.big_a == 0 || self.big_b == 0 || self.small_a == 0 || self.small_b == 0 {
            return Err(Error::InvalidSpec("batch sizes must be at least 1".into()));
        }
        Ok(())
    }
}

/// One iteration's estimates and the oracle calls spent on them.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateBundle {
    pub g_tilde: Vector,
    pub j_tilde: Matrix,
    pub evals_g: u64,
    pub evals_j: u64,
}

#[derive(Debug, Clone)]
pub struct EpochAnchor {
    pub x0: Vector,
    pub g0_tilde: Vector,
    pub j0_tilde: Matrix,
    pub cached_component_values: Option<Vec<Vector>>,
    pub cached_component_jacobians: Option<Vec<Matrix>>,
}

impl EpochAnchor {
    /// The anchor of a mini-batch estimator: only remembers `x₀`.
    pub fn pass_through(x0: Vector) -> Self {
        Self {
            x0,
            g0_tilde: Vector::zeros(0),
            j0_tilde: Matrix::zeros(0, 0),
            cached_component_values: None,
            cached_component_jacobians: None,
        }
    }
}

/// An estimator kind together with its batch sizes and sampling policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimator {
    pub kind: EstimatorKind,
    pub plan: BatchPlan,
    pub sampling: SamplingMode,
    /// Anchor Jacobians are cached only when `N·m·n` stays within this many floats.
    pub cache_limit: usize,
}

impl Estimator {
    pub fn new(kind: EstimatorKind, plan: BatchPlan) -> Self {
        Self {
            kind,
            plan,
            sampling: SamplingMode::WithReplacement,
            cache_limit: DEFAULT_CACHE_LIMIT,
        }
    }

    pub fn with_sampling(mut self, sampling: SamplingMode) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_cache_limit(mut self, floats: usize) -> Self {
        self.cache_limit = floats;
        self
    }

    fn check(&self, problem: &CompositeProblem, x: &Vector) -> Result<()> {
        self.plan.validate()?;
        check_dim("x", problem.dim_n, x.len())?;
        check_finite("x", x)?;
        if self.kind.has_exact_anchor() && !problem.is_finite_sum() {
            return Err(Error::Unsupported(format!(
                "{} needs a finite-sum population",
                self.kind
            )));
        }
        Ok(())
    }

    fn draw(
        &self,
        problem: &CompositeProblem,
        size: u64,
        stream: &RngStream,
        channel: Channel,
        k: u64,
        i: u64,
    ) -> Batch {
        let mut rng = stream.rng(channel, k, i);
        problem.sample_batch(size, self.sampling, &mut rng)
    }

    /// Build the epoch anchor at `x0`; anchored kinds also return the `i = 0` bundle.
    pub fn begin_epoch(
        &self,
        problem: &CompositeProblem,
        x0: &Vector,
        stream: &RngStream,
        epoch: u64,
    ) -> Result<(EpochAnchor, Option<EstimateBundle>)> {
        self.check(problem, x0)?;
        let (m, n) = (problem.dim_m, problem.dim_n);
        match self.kind {
            EstimatorKind::Est0MiniBatch => Ok((EpochAnchor::pass_through(x0.clone()), None)),
            EstimatorKind::Est1StandardVr | EstimatorKind::Est2CorrectedVr => {
                let va = self.draw(
                    problem,
                    self.plan.big_a,
                    stream,
                    Channel::AnchorValues,
                    epoch,
                    0,
                );
                let jb = self.draw(
                    problem,
                    self.plan.big_b,
                    stream,
                    Channel::AnchorJacobians,
                    epoch,
                    0,
                );
                let wa: Vec<_> = va.weights().collect();
                let wb: Vec<_> = jb.weights().collect();
                let g0 = weighted_vector_sum(&wa, m, |j| problem.g_component(j, x0));
                let j0 = weighted_matrix_sum(&wb, m, n, |j| problem.g_jacobian(j, x0));
                let bundle = EstimateBundle {
                    g_tilde: g0.clone(),
                    j_tilde: j0.clone(),
                    evals_g: self.plan.big_a,
                    evals_j: self.plan.big_b,
                };
                Ok((
                    EpochAnchor {
                        x0: x0.clone(),
                        g0_tilde: g0,
                        j0_tilde: j0,
                        cached_component_values: None,
                        cached_component_jacobians: None,
                    },
                    Some(bundle),
                ))
            }
            EstimatorKind::Est3ExactAnchorStandard | EstimatorKind::Est4ExactAnchorCorrected => {
                let big_n = problem.population_size();
                let cache_jac = big_n.saturating_mul(m).saturating_mul(n) <= self.cache_limit;
                let values: Vec<Vector> = par_map(big_n, |j| problem.g_component(j, x0));
                let w = 1.0 / big_n as f64;
                let all: Vec<(usize, f64)> = (0..big_n).map(|j| (j, w)).collect();
                let g0 = weighted_vector_sum(&all, m, |j| values[j].clone());
                let (j0, jacs) = if cache_jac {
                    let jacs: Vec<Matrix> = par_map(big_n, |j| problem.g_jacobian(j, x0));
                    let j0 = weighted_matrix_sum(&all, m, n, |j| jacs[j].clone());
                    (j0, Some(jacs))
                } else {
                    (
                        weighted_matrix_sum(&all, m, n, |j| problem.g_jacobian(j, x0)),
                        None,
                    )
                };
                let bundle = EstimateBundle {
                    g_tilde: g0.clone(),
                    j_tilde: j0.clone(),
                    evals_g: big_n as u64,
                    evals_j: big_n as u64,
                };
                Ok((
                    EpochAnchor {
                        x0: x0.clone(),
                        g0_tilde: g0,
                        j0_tilde: j0,
                        cached_component_values: Some(values),
                        cached_component_jacobians: jacs,
                    },
                    Some(bundle),
                ))
            }
        }
    }

    /// Estimate at `x` for inner step `inner` of epoch `epoch`.
    ///
    /// Anchored kinds need `inner ≥ 1` (step 0 is served by [`Self::begin_epoch`]).
    pub fn estimate(
        &self,
        problem: &CompositeProblem,
        anchor: Option<&EpochAnchor>,
        x: &Vector,
        epoch: u64,
        inner: u64,
        stream: &RngStream,
    ) -> Result<EstimateBundle> {
        self.check(problem, x)?;
        let (m, n) = (problem.dim_m, problem.dim_n);
        let p = &self.plan;
        if self.kind == EstimatorKind::Est0MiniBatch {
            let va = self.draw(problem, p.big_a, stream, Channel::InnerValues, epoch, inner);
            let jb = self.draw(
                problem,
                p.big_b,
                stream,
                Channel::InnerJacobians,
                epoch,
                inner,
            );
            let wa: Vec<_> = va.weights().collect();
            let wb: Vec<_> = jb.weights().collect();
            return Ok(EstimateBundle {
                g_tilde: weighted_vector_sum(&wa, m, |j| problem.g_component(j, x)),
                j_tilde: weighted_matrix_sum(&wb, m, n, |j| problem.g_jacobian(j, x)),
                evals_g: p.big_a,
                evals_j: p.big_b,
            });
        }
        let anchor = anchor.ok_or(Error::MissingAnchor(self.kind.short_name()))?;
        if anchor.g0_tilde.len() != m {
            return Err(Error::MissingAnchor(self.kind.short_name()));
        }
        if inner == 0 {
            return Err(Error::InvalidSpec(
                "inner step 0 of an anchored estimator is produced by begin_epoch".into(),
            ));
        }
        let x0 = &anchor.x0;
        let d = x - x0;
        let va = self.draw(
            problem,
            p.small_a,
            stream,
            Channel::InnerValues,
            epoch,
            inner,
        );
        let jb = self.draw(
            problem,
            p.small_b,
            stream,
            Channel::InnerJacobians,
            epoch,
            inner,
        );
        let wa: Vec<_> = va.weights().collect();
        let wb: Vec<_> = jb.weights().collect();

        let cached_vals = anchor.cached_component_values.as_ref();
        let cached_jacs = anchor.cached_component_jacobians.as_ref();
        if self.kind.has_exact_anchor() && cached_vals.is_none() {
            return Err(Error::MissingAnchor(self.kind.short_name()));
        }
        let val_at_x0 = |j: usize| -> Vector {
            match cached_vals {
                Some(c) => c[j].clone(),
                None => problem.g_component(j, x0),
            }
        };
        let jac_at_x0 = |j: usize| -> Matrix {
            match cached_jacs {
                Some(c) => c[j].clone(),
                None => problem.g_jacobian(j, x0),
            }
        };

        let mut g_tilde = if self.kind.is_corrected() {
            weighted_vector_sum(&wa, m, |j| {
                problem.g_component(j, x) - val_at_x0(j) - jac_at_x0(j) * &d
            }) + &anchor.j0_tilde * &d
        } else {
            weighted_vector_sum(&wa, m, |j| problem.g_component(j, x) - val_at_x0(j))
        };
        g_tilde += &anchor.g0_tilde;
        let j_tilde = weighted_matrix_sum(&wb, m, n, |j| problem.g_jacobian(j, x) - jac_at_x0(j))
            + &anchor.j0_tilde;

        let (evals_g, evals_j) = match self.kind {
            EstimatorKind::Est1StandardVr => (2 * p.small_a, 2 * p.small_b),
            EstimatorKind::Est2CorrectedVr => (2 * p.small_a, p.small_a + 2 * p.small_b),
            EstimatorKind::Est3ExactAnchorStandard => {
                let jac = if cached_jacs.is_some() {
                    p.small_b
                } else {
                    2 * p.small_b
                };
                (p.small_a, jac)
            }
            EstimatorKind::Est4ExactAnchorCorrected => {
                let jac = if cached_jacs.is_some() {
                    p.small_b
                } else {
                    p.small_a + 2 * p.small_b
                };
                (p.small_a, jac)
            }
            EstimatorKind::Est0MiniBatch => unreachable!(),
        };
        Ok(EstimateBundle {
            g_tilde,
            j_tilde,
            evals_g,
            evals_j,
        })
    }
}

fn par_map<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

/// Free-function form of [`Estimator::begin_epoch`] with default options.
pub fn begin_epoch(
    kind: EstimatorKind,
    problem: &CompositeProblem,
    plan: BatchPlan,
    x0: &Vector,
    stream: &RngStream,
) -> Result<(EpochAnchor, Option<EstimateBundle>)> {
    Estimator::new(kind, plan).begin_epoch(problem, x0, stream, 0)
}

/// Free-function form of [`Estimator::estimate`] with default options.
pub fn estimate(
    kind: EstimatorKind,
    problem: &CompositeProblem,
    plan: BatchPlan,
    anchor: Option<&EpochAnchor>,
    x: &Vector,
    inner: u64,
    stream: &RngStream,
) -> Result<EstimateBundle> {
    Estimator::new(kind, plan).estimate(problem, anchor, x, 0, inner, stream)
}

/// Whether a probe keeps the given anchor or redraws it for every trial.
///
/// Est1/Est2 are unbiased only over the anchor's randomness too, so their
/// probe must redraw it; with a fixed anchor the mean is
/// `g̃₀ + g(x) − g(x₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorMode {
    Fixed,
    Redraw,
}

#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub mean_g: Vector,
    pub mean_j: Matrix,
    /// Standard error of `mean_g` (root of the summed coordinate variances).
    pub stderr_g: f64,
    /// Standard error of `mean_j` in Frobenius norm.
    pub stderr_j: f64,
    pub trials: usize,
}

/// Monte-Carlo mean of the estimator at `x` over independent batch draws.
pub fn unbiasedness_probe(
    estimator: &Estimator,
    problem: &CompositeProblem,
    anchor: &EpochAnchor,
    x: &Vector,
    trials: usize,
    stream: &RngStream,
    mode: AnchorMode,
) -> Result<ProbeResult> {
    if trials < 2 {
        return Err(Error::InvalidSpec("a probe needs at least 2 trials".into()));
    }
    let (m, n) = (problem.dim_m, problem.dim_n);
    let redraw = mode == AnchorMode::Redraw
        && estimator.kind.is_anchored()
        && !estimator.kind.has_exact_anchor();
    let samples: Vec<Result<(Vector, Matrix)>> = {
        use rayon::prelude::*;
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let s = stream.fork(t as u64);
                let fresh;
                let a = if redraw {
                    fresh = estimator.begin_epoch(problem, &anchor.x0, &s, 0)?.0;
                    &fresh
                } else {
                    anchor
                };
                let b = estimator.estimate(problem, Some(a), x, 0, 1, &s)?;
                Ok((b.g_tilde, b.j_tilde))
            })
            .collect()
    };
    let mut mean_g = Vector::zeros(m);
    let mut mean_j = Matrix::zeros(m, n);
    let mut gs = Vec::with_capacity(trials);
    let mut js = Vec::with_capacity(trials);
    for s in samples {
        let (g, j) = s?;
        mean_g += &g;
        mean_j += &j;
        gs.push(g);
        js.push(j);
    }
    let tf = trials as f64;
    mean_g /= tf;
    mean_j /= tf;
    let var_g: f64 = gs.iter().map(|g| (g - &mean_g).norm_squared()).sum::<f64>() / (tf - 1.0);
    let var_j: f64 = js.iter().map(|j| (j - &mean_j).norm_squared()).sum::<f64>() / (tf - 1.0);
    Ok(ProbeResult {
        mean_g,
        mean_j,
        stderr_g: (var_g / tf).sqrt(),
        stderr_j: (var_j / tf).sqrt(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::composite::outer::Affine;
    use crate::composite::regularizer::Zero;
    use crate::composite::{FnComponents, LipschitzConstants, Population};

    fn scalar_problem(comps: FnComponents) -> CompositeProblem {
        let n = crate::composite::ComponentOracle::count(&comps);
        CompositeProblem::new(
            Arc::new(Affine::identity_1d()),
            Arc::new(Zero),
            Arc::new(comps),
            Population::FiniteSum { n },
            LipschitzConstants {
                l_f: 1.0,
                l_g: 1.0,
                big_l_g: 1.0,
                sigma_g: 1.0,
                sigma_gprime: 1.0,
                lhat_g: 1.0,
                big_lhat_g: 1.0,
            },
            0.0,
            Vector::zeros(1),
            0,
        )
        .unwrap()
    }

    fn linear_pair() -> CompositeProblem {
        scalar_problem(
            FnComponents::new(1, 1)
                .push_affine(Matrix::from_element(1, 1, 1.0), Vector::zeros(1))
                .push_affine(Matrix::from_element(1, 1, 3.0), Vector::zeros(1)),
        )
    }

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn exact_anchor_by_hand() {
        let p = linear_pair();
        let est = Estimator::new(
            EstimatorKind::Est3ExactAnchorStandard,
            BatchPlan::uniform(2),
        )
        .with_sampling(SamplingMode::FullCoverage);
        let stream = RngStream::new(1);
        let (anchor, b0) = est.begin_epoch(&p, &s(1.0), &stream, 0).unwrap();
        let b0 = b0.unwrap();
        assert_eq!(anchor.g0_tilde[0], 2.0);
        assert_eq!(anchor.j0_tilde[(0, 0)], 2.0);
        assert_eq!((b0.evals_g, b0.evals_j), (2, 2));
        let b = est
            .estimate(&p, Some(&anchor), &s(2.0), 0, 1, &stream)
            .unwrap();
        assert_eq!(b.g_tilde[0], 4.0);
        assert_eq!((b.evals_g, b.evals_j), (2, 2));
    }

    #[test]
    fn corrected_estimator_gamma2_regime() {
        // g₁(x) = x², g₂(x) = 0; exact anchor at 0, inner batch {g₁}, x = 1
        let p = scalar_problem(
            FnComponents::new(1, 1)
                .push(
                    |x| s(x[0] * x[0]),
                    |x| Matrix::from_element(1, 1, 2.0 * x[0]),
                )
                .push(|_| s(0.0), |_| Matrix::zeros(1, 1)),
        );
        let est = Estimator::new(
            EstimatorKind::Est4ExactAnchorCorrected,
            BatchPlan::uniform(1),
        );
        let stream = RngStream::new(3);
        let (anchor, _) = est.begin_epoch(&p, &s(0.0), &stream, 0).unwrap();
        // find an inner draw that selects component 0
        let inner = (1..100)
            .find(|&i| {
                let mut rng = stream.rng(Channel::InnerValues, 0, i);
                p.sample_batch(1, SamplingMode::WithReplacement, &mut rng)
                    .entries[0]
                    .0
                    == 0
            })
            .unwrap();
        let b = est
            .estimate(&p, Some(&anchor), &s(1.0), 0, inner, &stream)
            .unwrap();
        assert_eq!(b.g_tilde[0], 1.0);
        assert_eq!(p.g_value(&s(1.0))[0], 0.5);
    }

    #[test]
    fn standard_vr_at_anchor_returns_anchor() {
        let p = linear_pair();
        let est = Estimator::new(EstimatorKind::Est1StandardVr, BatchPlan::new(1, 1, 1, 1));
        let stream = RngStream::new(5);
        let (anchor, _) = est.begin_epoch(&p, &s(0.7), &stream, 0).unwrap();
        for i in 1..10 {
            let b = est
                .estimate(&p, Some(&anchor), &s(0.7), 0, i, &stream)
                .unwrap();
            assert_eq!(b.g_tilde, anchor.g0_tilde);
            assert_eq!(b.j_tilde, anchor.j0_tilde);
            assert_eq!((b.evals_g, b.evals_j), (2, 2));
        }
    }

    #[test]
    fn full_coverage_anchor_is_exact() {
        let p = linear_pair();
        let est = Estimator::new(EstimatorKind::Est1StandardVr, BatchPlan::uniform(2))
            .with_sampling(SamplingMode::FullCoverage);
        let (anchor, _) = est.begin_epoch(&p, &s(1.5), &RngStream::new(0), 0).unwrap();
        assert_eq!(anchor.g0_tilde, p.g_value(&s(1.5)));
    }

    #[test]
    fn mini_batch_has_no_anchor_cost() {
        let p = linear_pair();
        let est = Estimator::new(EstimatorKind::Est0MiniBatch, BatchPlan::new(3, 4, 1, 1));
        let (anchor, bundle) = est.begin_epoch(&p, &s(1.0), &RngStream::new(0), 0).unwrap();
        assert!(bundle.is_none());
        let b = est
            .estimate(&p, Some(&anchor), &s(1.0), 0, 0, &RngStream::new(0))
            .unwrap();
        assert_eq!((b.evals_g, b.evals_j), (3, 4));
    }

    #[test]
    fn corrected_vr_counts() {
        let p = linear_pair();
        let est = Estimator::new(EstimatorKind::Est2CorrectedVr, BatchPlan::new(5, 6, 3, 4));
        let stream = RngStream::new(0);
        let (anchor, b0) = est.begin_epoch(&p, &s(1.0), &stream, 0).unwrap();
        let b0 = b0.unwrap();
        assert_eq!((b0.evals_g, b0.evals_j), (5, 6));
        let b = est
            .estimate(&p, Some(&anchor), &s(2.0), 0, 1, &stream)
            .unwrap();
        assert_eq!((b.evals_g, b.evals_j), (6, 11));
    }

    #[test]
    fn uncached_jacobians_are_counted() {
        let p = linear_pair();
        for (kind, want) in [
            (EstimatorKind::Est3ExactAnchorStandard, (3, 8)),
            (EstimatorKind::Est4ExactAnchorCorrected, (3, 11)),
        ] {
            let est = Estimator::new(kind, BatchPlan::new(1, 1, 3, 4)).with_cache_limit(0);
            let stream = RngStream::new(0);
            let (anchor, _) = est.begin_epoch(&p, &s(1.0), &stream, 0).unwrap();
            assert!(anchor.cached_component_jacobians.is_none());
            let b = est
                .estimate(&p, Some(&anchor), &s(2.0), 0, 1, &stream)
                .unwrap();
            assert_eq!((b.evals_g, b.evals_j), want, "{kind}");
        }
    }

    #[test]
    fn missing_anchor_rejected() {
        let p = linear_pair();
        let est = Estimator::new(EstimatorKind::Est1StandardVr, BatchPlan::uniform(1));
        let r = est.estimate(&p, None, &s(1.0), 0, 1, &RngStream::new(0));
        assert!(matches!(r, Err(Error::MissingAnchor(_))));
    }

    #[test]
    fn symmetric_components_probe_to_zero() {
        let p = scalar_problem(
            FnComponents::new(1, 1)
                .push_affine(Matrix::from_element(1, 1, 1.0), Vector::zeros(1))
                .push_affine(Matrix::from_element(1, 1, -1.0), Vector::zeros(1)),
        );
        let est = Estimator::new(EstimatorKind::Est0MiniBatch, BatchPlan::uniform(1));
        let anchor = EpochAnchor::pass_through(s(2.0));
        let r = unbiasedness_probe(
            &est,
            &p,
            &anchor,
            &s(2.0),
            4000,
            &RngStream::new(9),
            AnchorMode::Fixed,
        )
        .unwrap();
        assert!(r.mean_g[0].abs() <= 3.0 * r.stderr_g);
    }

    #[test]
    fn kind_serde_names() {
        let js = serde_json::to_string(&EstimatorKind::Est1StandardVr).unwrap();
        assert_eq!(js, "\"Est1_StandardVR\"");
        let k: EstimatorKind = serde_json::from_str("\"Est4\"").unwrap();
        assert_eq!(k, EstimatorKind::Est4ExactAnchorCorrected);
    }
}
