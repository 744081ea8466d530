//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 500;
const DENSE_LIMIT: usize = 64;

/// Largest singular value.
///
/// Power iteration on `AᵀA` (relative tolerance 1e-10, at most 500 sweeps);
/// falls back to a dense SVD when the iteration stalls and the matrix is small,
/// or when the start vector happens to be orthogonal to the top subspace.
pub fn op_norm(a: &Matrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    match power_iteration(a) {
        Some(s) => s,
        None => op_norm_svd(a),
    }
}

/// Exact operator norm through a dense SVD.
pub fn op_norm_svd(a: &Matrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().max()
}

fn power_iteration(a: &Matrix) -> Option<f64> {
    let n = a.ncols();
    // deterministic, generic start vector
    let mut v = Vector::from_fn(n, |i, _| 1.0 + 0.37 * ((i as f64) * 1.618_033_988_7).sin());
    let norm = v.norm();
    v /= norm;
    let mut sigma_sq = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let av = a * &v;
        let mut w = a.transpose() * &av;
        let next = w.norm();
        if next == 0.0 {
            // start vector in the null space, or a == 0
            return if a.iter().all(|x| *x == 0.0) {
                Some(0.0)
            } else {
                None
            };
        }
        w /= next;
        let converged = (next - sigma_sq).abs() <= POWER_TOL * next;
        sigma_sq = next;
        v = w;
        if converged {
            let s = sigma_sq.sqrt();
            // power iteration approaches from below; guard against gross stalls
            if a.nrows().max(a.ncols()) <= DENSE_LIMIT {
                let exact = op_norm_svd(a);
                if (exact - s).abs() > 1e-6 * exact.max(1.0) {
                    return Some(exact);
                }
            }
            return Some(s);
        }
    }
    if a.nrows().max(a.ncols()) <= DENSE_LIMIT {
        None
    } else {
        Some(sigma_sq.sqrt())
    }
}

/// Largest Euclidean norm over the rows of `a`.
pub fn max_row_norm(a: &Matrix) -> f64 {
    a.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

pub fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}
