//! Closed convex regularizers `h : ℝ^n → ℝ ∪ {+∞}`.

use std::fmt;

use nalgebra::SymmetricEigen;

use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, Copy)]
pub enum RegularizerStructure<'a> {
    Zero,
    /// `h(x) = ½xᵀQx + qᵀx` with `Q` symmetric positive semidefinite.
    Quadratic {
        hessian: &'a Matrix,
        linear: &'a Vector,
    },
    General,
}

pub trait Regularizer: Send + Sync + fmt::Debug {
    fn value(&self, x: &Vector) -> f64;

    /// Proximal map of `t·h` at `x`.
    fn prox(&self, x: &Vector, t: f64) -> Vector;

    fn structure(&self) -> RegularizerStructure<'_> {
        RegularizerStructure::General
    }

    /// `inf h`, when known in closed form.
    fn minimum(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl Regularizer for Zero {
    fn value(&self, _x: &Vector) -> f64 {
        0.0
    }

    fn prox(&self, x: &Vector, _t: f64) -> Vector {
        x.clone()
    }

    fn structure(&self) -> RegularizerStructure<'_> {
        RegularizerStructure::Zero
    }

    fn minimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `h(x) = weight·‖x‖₁`.
#[derive(Debug, Clone, Copy)]
pub struct L1 {
    pub weight: f64,
}

impl L1 {
    pub fn new(weight: f64) -> Self {
        Self { weight }
    }
}

impl Regularizer for L1 {
    fn value(&self, x: &Vector) -> f64 {
        self.weight * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox(&self, x: &Vector, t: f64) -> Vector {
        let s = t * self.weight;
        x.map(|v| v.signum() * (v.abs() - s).max(0.0))
    }

    fn minimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `h(x) = ½xᵀQx + qᵀx`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    hessian: Matrix,
    linear: Vector,
    eigvals: Vector,
    eigvecs: Matrix,
}

impl Quadratic {
    /// `hessian` is symmetrized; negative eigenvalues are rejected.
    pub fn new(hessian: Matrix, linear: Vector) -> Option<Self> {
        if hessian.nrows() != hessian.ncols() || hessian.nrows() != linear.len() {
            return None;
        }
        let sym = (&hessian + hessian.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let scale = eig.eigenvalues.amax().max(1.0);
        if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
            return None;
        }
        Some(Self {
            hessian: sym,
            linear,
            eigvals: eig.eigenvalues.map(|l| l.max(0.0)),
            eigvecs: eig.eigenvectors,
        })
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn linear(&self) -> &Vector {
        &self.linear
    }

    /// Minimizer when `Q` is positive definite.
    pub fn argmin(&self) -> Option<Vector> {
        if self.eigvals.iter().any(|&l| l <= 0.0) {
            return None;
        }
        let coords = self.eigvecs.transpose() * &self.linear;
        let scaled = coords.component_div(&self.eigvals);
        Some(-(&self.eigvecs * scaled))
    }
}

impl Regularizer for Quadratic {
    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    fn prox(&self, x: &Vector, t: f64) -> Vector {
        // (I + tQ)⁻¹ (x − t q) in the eigenbasis
        let rhs = x - &self.linear * t;
        let coords = self.eigvecs.transpose() * rhs;
        let scaled = coords.zip_map(&self.eigvals, |c, l| c / (1.0 + t * l));
        &self.eigvecs * scaled
    }

    fn structure(&self) -> RegularizerStructure<'_> {
        RegularizerStructure::Quadratic {
            hessian: &self.hessian,
            linear: &self.linear,
        }
    }

    fn minimum(&self) -> Option<f64> {
        self.argmin().map(|x| self.value(&x))
    }
}

/// Indicator of the box `[lower, upper]` (coordinatewise).
#[derive(Debug, Clone)]
pub struct BoxIndicator {
    pub lower: Vector,
    pub upper: Vector,
}

impl Regularizer for BoxIndicator {
    fn value(&self, x: &Vector) -> f64 {
        let inside = x
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| v >= lo && v <= hi);
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, x: &Vector, _t: f64) -> Vector {
        Vector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi)),
        )
    }

    fn minimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_soft_threshold() {
        let h = L1::new(2.0);
        let p = h.prox(&Vector::from_vec(vec![3.0, -0.5, -4.0]), 0.5);
        assert_eq!(p, Vector::from_vec(vec![2.0, 0.0, -3.0]));
    }

    #[test]
    fn quadratic_prox_solves_linear_system() {
        let q = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let lin = Vector::from_vec(vec![1.0, -1.0]);
        let h = Quadratic::new(q.clone(), lin.clone()).unwrap();
        let x = Vector::from_vec(vec![0.3, 0.7]);
        let t = 0.9;
        let p = h.prox(&x, t);
        // optimality: (p − x)/t + Qp + q = 0
        let res = (&p - &x) / t + &q * &p + &lin;
        assert!(res.norm() < 1e-12);
        let xm = h.argmin().unwrap();
        assert!((&q * &xm + &lin).norm() < 1e-12);
    }

    #[test]
    fn indefinite_quadratic_rejected() {
        let q = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(Quadratic::new(q, Vector::zeros(2)).is_none());
    }

    #[test]
    fn box_indicator_projection() {
        let h = BoxIndicator {
            lower: Vector::from_vec(vec![0.0, 0.0]),
            upper: Vector::from_vec(vec![1.0, 1.0]),
        };
        assert_eq!(h.value(&Vector::from_vec(vec![2.0, 0.5])), f64::INFINITY);
        assert_eq!(
            h.prox(&Vector::from_vec(vec![2.0, -0.5]), 1.0),
            Vector::from_vec(vec![1.0, 0.0])
        );
    }
}
