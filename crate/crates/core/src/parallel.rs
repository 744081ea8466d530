//! Deterministic weighted reductions over component indices.
//!
//! Work is split into fixed-size chunks, each summed sequentially, and the
//! chunk partials are combined in index order. The floating-point result is
//! therefore identical for any number of worker threads.

use rayon::prelude::*;

use crate::linalg::{Matrix, Vector};

const CHUNK: usize = 32;

/// `Σ w_j · f(j)` over `(j, w_j)` pairs.
pub fn weighted_vector_sum<F>(entries: &[(usize, f64)], dim: usize, f: F) -> Vector
where
    F: Fn(usize) -> Vector + Sync,
{
    let partials: Vec<Vector> = entries
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Vector::zeros(dim);
            for &(j, w) in chunk {
                acc.axpy(w, &f(j), 1.0);
            }
            acc
        })
        .collect();
    partials
        .into_iter()
        .fold(Vector::zeros(dim), |acc, p| acc + p)
}

/// `Σ w_j · f(j)` for matrix-valued `f`.
pub fn weighted_matrix_sum<F>(entries: &[(usize, f64)], rows: usize, cols: usize, f: F) -> Matrix
where
    F: Fn(usize) -> Matrix + Sync,
{
    let partials: Vec<Matrix> = entries
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Matrix::zeros(rows, cols);
            for &(j, w) in chunk {
                acc += f(j) * w;
            }
            acc
        })
        .collect();
    partials
        .into_iter()
        .fold(Matrix::zeros(rows, cols), |acc, p| acc + p)
}

/// Joint vector and matrix sums sharing one evaluation per index.
pub fn weighted_pair_sum<F>(
    entries: &[(usize, f64)],
    dim: usize,
    rows: usize,
    cols: usize,
    f: F,
) -> (Vector, Matrix)
where
    F: Fn(usize) -> (Vector, Matrix) + Sync,
{
    let partials: Vec<(Vector, Matrix)> = entries
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut v = Vector::zeros(dim);
            let mut m = Matrix::zeros(rows, cols);
            for &(j, w) in chunk {
                let (a, b) = f(j);
                v.axpy(w, &a, 1.0);
                m += b * w;
            }
            (v, m)
        })
        .collect();
    partials.into_iter().fold(
        (Vector::zeros(dim), Matrix::zeros(rows, cols)),
        |(v, m), (a, b)| (v + a, m + b),
    )
}
