//! Convex outer functions `f : ℝ^m → ℝ`.
//!
//! Besides value and subgradient, every outer function exposes its Fenchel
//! conjugate and proximal map. Those two are what the certified dual solver
//! needs to bound subproblem suboptimality.

use std::fmt;

use crate::linalg::Vector;

/// Closed-form structure a solver may exploit.
#[derive(Debug, Clone, Copy)]
pub enum OuterStructure<'a> {
    /// `f(z) = ⟨c, z⟩ + offset`.
    Affine {
        slope: &'a Vector,
        offset: f64,
    },
    /// `f(z) = ½‖z‖²`.
    HalfSquaredNorm,
    /// `f(z) = scale·‖z‖₂`.
    EuclideanNorm {
        scale: f64,
    },
    General,
}

pub trait OuterFunction: Send + Sync + fmt::Debug {
    fn value(&self, z: &Vector) -> f64;

    /// One element of `∂f(z)`, chosen deterministically.
    fn subgradient(&self, z: &Vector) -> Vector;

    /// `f*(y)`; `+∞` outside the domain of the conjugate.
    fn conjugate(&self, y: &Vector) -> f64;

    /// Proximal map of `t·f` at `v`.
    fn prox(&self, v: &Vector, t: f64) -> Vector;

    /// Lipschitz constant of `∇f` when `f` is smooth.
    fn gradient_lipschitz(&self) -> Option<f64> {
        None
    }

    fn structure(&self) -> OuterStructure<'_> {
        OuterStructure::General
    }
}

// relative slack when testing membership in the conjugate's domain
const DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Affine {
    pub slope: Vector,
    pub offset: f64,
}

impl Affine {
    pub fn new(slope: Vector, offset: f64) -> Self {
        Self { slope, offset }
    }

    /// `f(z) = z` on ℝ¹.
    pub fn identity_1d() -> Self {
        Self::new(Vector::from_element(1, 1.0), 0.0)
    }
}

impl OuterFunction for Affine {
    fn value(&self, z: &Vector) -> f64 {
        self.slope.dot(z) + self.offset
    }

    fn subgradient(&self, _z: &Vector) -> Vector {
        self.slope.clone()
    }

    fn conjugate(&self, y: &Vector) -> f64 {
        let gap = (y - &self.slope).norm();
        if gap <= DOMAIN_TOL * (1.0 + self.slope.norm()) {
            -self.offset
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, v: &Vector, t: f64) -> Vector {
        v - &self.slope * t
    }

    fn gradient_lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }

    fn structure(&self) -> OuterStructure<'_> {
        OuterStructure::Affine {
            slope: &self.slope,
            offset: self.offset,
        }
    }
}

/// `f(z) = scale·‖z‖₂`, Lipschitz with constant `scale`.
#[derive(Debug, Clone, Copy)]
pub struct EuclideanNorm {
    pub scale: f64,
}

impl EuclideanNorm {
    pub fn new(scale: f64) -> Self {
        Self { scale }
    }
}

impl Default for EuclideanNorm {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl OuterFunction for EuclideanNorm {
    fn value(&self, z: &Vector) -> f64 {
        self.scale * z.norm()
    }

    fn subgradient(&self, z: &Vector) -> Vector {
        let n = z.norm();
        if n > 0.0 {
            z * (self.scale / n)
        } else {
            Vector::zeros(z.len())
        }
    }

    fn conjugate(&self, y: &Vector) -> f64 {
        if y.norm() <= self.scale * (1.0 + DOMAIN_TOL) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, v: &Vector, t: f64) -> Vector {
        let n = v.norm();
        let shrink = t * self.scale;
        if n <= shrink {
            Vector::zeros(v.len())
        } else {
            v * (1.0 - shrink / n)
        }
    }

    fn structure(&self) -> OuterStructure<'_> {
        OuterStructure::EuclideanNorm { scale: self.scale }
    }
}

/// `f(z) = ½‖z‖²`. Only locally Lipschitz; problems using it declare `l_f`
/// on the region their iterates visit.
#[derive(Debug, Clone, Copy, Default)]
pub struct HalfSquaredNorm;

impl OuterFunction for HalfSquaredNorm {
    fn value(&self, z: &Vector) -> f64 {
        0.5 * z.norm_squared()
    }

    fn subgradient(&self, z: &Vector) -> Vector {
        z.clone()
    }

    fn conjugate(&self, y: &Vector) -> f64 {
        0.5 * y.norm_squared()
    }

    fn prox(&self, v: &Vector, t: f64) -> Vector {
        v / (1.0 + t)
    }

    fn gradient_lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }

    fn structure(&self) -> OuterStructure<'_> {
        OuterStructure::HalfSquaredNorm
    }
}

/// Exact penalty `f(z) = C·Σ max{zᵢ, 0}`; Lipschitz with constant `C·√m`.
#[derive(Debug, Clone, Copy)]
pub struct HingePenalty {
    pub weight: f64,
}

impl HingePenalty {
    pub fn new(weight: f64) -> Self {
        Self { weight }
    }
}

impl OuterFunction for HingePenalty {
    fn value(&self, z: &Vector) -> f64 {
        self.weight * z.iter().map(|v| v.max(0.0)).sum::<f64>()
    }

    fn subgradient(&self, z: &Vector) -> Vector {
        z.map(|v| if v > 0.0 { self.weight } else { 0.0 })
    }

    fn conjugate(&self, y: &Vector) -> f64 {
        let tol = DOMAIN_TOL * (1.0 + self.weight);
        if y.iter().all(|&v| v >= -tol && v <= self.weight + tol) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, v: &Vector, t: f64) -> Vector {
        let step = t * self.weight;
        v.map(|x| {
            if x > step {
                x - step
            } else if x >= 0.0 {
                0.0
            } else {
                x
            }
        })
    }
}

/// One weighted kink `w·|t − b|` of a separable piecewise-linear function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kink {
    pub weight: f64,
    pub at: f64,
}

/// `f(z) = Σᵢ Σ_r w_{ir}·|zᵢ − b_{ir}|` with `w_{ir} ≥ 0`.
///
/// This is the mean of absolute-value pieces `|u·zᵢ − c|` aligned with the
/// coordinate axes, as produced by the doubly stochastic generator.
#[derive(Debug, Clone)]
pub struct SeparableAbsolute {
    /// Per coordinate, kinks sorted by location.
    kinks: Vec<Vec<Kink>>,
}

impl SeparableAbsolute {
    pub fn new(mut kinks: Vec<Vec<Kink>>) -> Self {
        for row in &mut kinks {
            row.retain(|k| k.weight > 0.0);
            row.sort_by(|a, b| a.at.total_cmp(&b.at));
        }
        Self { kinks }
    }

    pub fn coordinate_kinks(&self, i: usize) -> &[Kink] {
        &self.kinks[i]
    }

    fn eval_1d(kinks: &[Kink], t: f64) -> f64 {
        kinks.iter().map(|k| k.weight * (t - k.at).abs()).sum()
    }

    fn prox_1d(kinks: &[Kink], v: f64, tau: f64) -> f64 {
        let total: f64 = kinks.iter().map(|k| k.weight).sum();
        // slope on the segment right of the first `k` kinks
        let mut slope = -total;
        let r = kinks.len();
        for k in 0..=r {
            let t = v - tau * slope;
            let lo = if k == 0 {
                f64::NEG_INFINITY
            } else {
                kinks[k - 1].at
            };
            let hi = if k == r { f64::INFINITY } else { kinks[k].at };
            if t > lo && t < hi {
                return t;
            }
            if k < r {
                let next = slope + 2.0 * kinks[k].weight;
                let d = v - kinks[k].at;
                if d >= tau * slope && d <= tau * next {
                    return kinks[k].at;
                }
                slope = next;
            }
        }
        // rounding left no exact bracket: pick the closest kink
        kinks
            .iter()
            .map(|k| k.at)
            .min_by(|a, b| (a - v).abs().total_cmp(&(b - v).abs()))
            .unwrap_or(v)
    }

    fn conjugate_1d(kinks: &[Kink], u: f64) -> f64 {
        let total: f64 = kinks.iter().map(|k| k.weight).sum();
        if u.abs() > total * (1.0 + DOMAIN_TOL) + DOMAIN_TOL {
            return f64::INFINITY;
        }
        if kinks.is_empty() {
            return 0.0;
        }
        kinks
            .iter()
            .map(|k| u * k.at - Self::eval_1d(kinks, k.at))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl OuterFunction for SeparableAbsolute {
    fn value(&self, z: &Vector) -> f64 {
        self.kinks
            .iter()
            .zip(z.iter())
            .map(|(k, &t)| Self::eval_1d(k, t))
            .sum()
    }

    fn subgradient(&self, z: &Vector) -> Vector {
        Vector::from_iterator(
            z.len(),
            self.kinks.iter().zip(z.iter()).map(|(ks, &t)| {
                ks.iter()
                    .map(|k| {
                        if t > k.at {
                            k.weight
                        } else if t < k.at {
                            -k.weight
                        } else {
                            0.0
                        }
                    })
                    .sum::<f64>()
            }),
        )
    }

    fn conjugate(&self, y: &Vector) -> f64 {
        self.kinks
            .iter()
            .zip(y.iter())
            .map(|(k, &u)| Self::conjugate_1d(k, u))
            .sum()
    }

    fn prox(&self, v: &Vector, t: f64) -> Vector {
        Vector::from_iterator(
            v.len(),
            self.kinks
                .iter()
                .zip(v.iter())
                .map(|(k, &x)| Self::prox_1d(k, x, t)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    /// Brute-force check of the prox optimality on a grid around the answer.
    fn assert_is_prox(f: &dyn OuterFunction, x: &Vector, t: f64) {
        let p = f.prox(x, t);
        let obj = |y: &Vector| f.value(y) + (y - x).norm_squared() / (2.0 * t);
        let best = obj(&p);
        for i in 0..x.len() {
            for h in [1e-3, -1e-3, 1e-1, -1e-1] {
                let mut y = p.clone();
                y[i] += h;
                assert!(obj(&y) >= best - 1e-12, "prox not optimal along {i} by {h}");
            }
        }
    }

    /// Fenchel-Young: f(z) + f*(y) ≥ ⟨y, z⟩, with equality at y ∈ ∂f(z).
    fn assert_fenchel_young(f: &dyn OuterFunction, z: &Vector) {
        let y = f.subgradient(z);
        let lhs = f.value(z) + f.conjugate(&y);
        assert!((lhs - y.dot(z)).abs() < 1e-9, "{lhs} vs {}", y.dot(z));
    }

    #[test]
    fn norm_basics() {
        let f = EuclideanNorm::default();
        assert_eq!(f.value(&v(&[3.0, 4.0])), 5.0);
        assert_eq!(f.prox(&v(&[0.3, 0.4]), 1.0), v(&[0.0, 0.0]));
        assert_is_prox(&f, &v(&[3.0, -1.0]), 0.7);
        assert_fenchel_young(&f, &v(&[1.0, 2.0]));
        assert!(f.conjugate(&v(&[2.0, 0.0])).is_infinite());
    }

    #[test]
    fn hinge_basics() {
        let f = HingePenalty::new(1.0);
        assert_eq!(f.value(&v(&[-1.0, 2.0])), 2.0);
        assert_eq!(f.subgradient(&v(&[0.5, 2.0])), v(&[1.0, 1.0]));
        assert_is_prox(&f, &v(&[-0.5, 0.2, 3.0]), 0.5);
        assert_fenchel_young(&f, &v(&[-0.5, 0.2, 3.0]));
    }

    #[test]
    fn half_squared_and_affine() {
        let f = HalfSquaredNorm;
        assert_is_prox(&f, &v(&[1.0, -2.0]), 0.3);
        assert_fenchel_young(&f, &v(&[1.0, -2.0]));
        let a = Affine::new(v(&[1.0, -1.0]), 0.5);
        assert_eq!(a.value(&v(&[2.0, 1.0])), 1.5);
        assert_is_prox(&a, &v(&[1.0, 1.0]), 2.0);
        assert_fenchel_young(&a, &v(&[0.3, 0.1]));
    }

    #[test]
    fn separable_absolute_prox_and_conjugate() {
        let f = SeparableAbsolute::new(vec![
            vec![
                Kink {
                    weight: 0.3,
                    at: -1.0,
                },
                Kink {
                    weight: 0.2,
                    at: 0.5,
                },
            ],
            vec![Kink {
                weight: 0.5,
                at: 2.0,
            }],
        ]);
        for x in [-3.0, -1.0, -0.2, 0.5, 0.9, 4.0] {
            assert_is_prox(&f, &v(&[x, x]), 0.8);
            assert_fenchel_young(&f, &v(&[x + 0.01, x - 0.02]));
        }
        // conjugate domain is |u| ≤ total weight per coordinate
        assert!(f.conjugate(&v(&[0.6, 0.0])).is_infinite());
        assert!(f.conjugate(&v(&[0.5, 0.5])).is_finite());
    }
}
