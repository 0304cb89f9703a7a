//! Dense symmetric positive-definite helpers for small covariance matrices.

use crate::Real;

/// Lower-triangular Cholesky factor, or `None` if a pivot is not positive.
pub fn cholesky<T: Real>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// `log det A` from its Cholesky factor.
pub fn log_det<T: Real>(l: &[Vec<T>]) -> T {
    T::lit(2.0) * l.iter().enumerate().map(|(i, row)| row[i].ln()).sum::<T>()
}

/// Solves `L y = b` by forward substitution.
pub fn forward_solve<T: Real>(l: &[Vec<T>], b: &[T]) -> Vec<T> {
    let mut y = Vec::with_capacity(b.len());
    for i in 0..b.len() {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y.push(s / l[i][i]);
    }
    y
}

/// `x^T A^{-1} x` with `A = L L^T`.
pub fn mahalanobis<T: Real>(l: &[Vec<T>], x: &[T]) -> T {
    forward_solve(l, x).iter().map(|&v| v * v).sum()
}

/// `tr(A^{-1})` with `A = L L^T`.
pub fn trace_inverse<T: Real>(l: &[Vec<T>]) -> T {
    let n = l.len();
    let mut e = vec![T::zero(); n];
    let mut total = T::zero();
    for i in 0..n {
        e[i] = T::one();
        total += mahalanobis(l, &e);
        e[i] = T::zero();
    }
    total
}
