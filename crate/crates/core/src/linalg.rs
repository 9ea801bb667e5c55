//! Small dense and tridiagonal kernels. Matrices are row-major `n × n` slices.

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky<T: Scalar>(a: &[T], n: usize) -> Result<Vec<T>> {
    if a.len() != n * n {
        return Err(Error::Dimension {
            context: "cholesky",
            expected: n * n,
            found: a.len(),
        });
    }
    let tol = T::of(1e-10);
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (a[i * n + j], a[j * n + i]);
            if (x - y).abs() > tol * (x.abs() + y.abs() + T::one()) {
                return Err(Error::Covariance(format!("entry ({i},{j}) is not symmetric")));
            }
        }
    }
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= T::zero() || !s.is_finite() {
                    return Err(Error::Covariance(format!("non-positive pivot at row {i}")));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` for a constant lower-triangular `L`.
pub fn solve_lower<T: Scalar, R: Real<T>>(l: &[T], n: usize, b: &[R]) -> Vec<R> {
    let mut x: Vec<R> = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = b[i];
        for (k, &xk) in x.iter().enumerate() {
            let c = l[i * n + k];
            if c != T::zero() {
                s = s - xk * c;
            }
        }
        x.push(s / l[i * n + i]);
    }
    x
}

/// Solves `L x = b` where the factor itself is differentiable.
pub fn solve_lower_var<T: Scalar, R: Real<T>>(l: &[R], n: usize, b: &[R]) -> Vec<R> {
    let mut x: Vec<R> = Vec::with_capacity(n);
    for i in 0..n {
        let s = if i == 0 {
            b[0]
        } else {
            b[i] - R::dot(&l[i * n..i * n + i], &x)
        };
        x.push(s / l[i * n + i]);
    }
    x
}

/// Solves `Lᵀ x = b` for a constant lower-triangular `L`.
pub fn solve_lower_transpose<T: Scalar>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// `L b` for a constant lower-triangular `L`.
pub fn lower_mul<T: Scalar>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    (0..n)
        .map(|i| (0..=i).map(|k| l[i * n + k] * b[k]).sum())
        .collect()
}

/// `ln det(L Lᵀ)` from the Cholesky factor.
pub fn log_det_from_cholesky<T: Scalar>(l: &[T], n: usize) -> T {
    (0..n).map(|i| l[i * n + i].ln()).sum::<T>() * T::of(2.0)
}

/// Thomas elimination for a tridiagonal system.
///
/// Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`;
/// `lower[0]` and `upper[n-1]` are ignored. No pivoting: callers supply
/// diagonally dominant or symmetric positive-definite systems.
pub fn solve_tridiagonal<T: Scalar, R: Real<T>>(
    lower: &[R],
    diag: &[R],
    upper: &[R],
    rhs: &[R],
) -> Vec<R> {
    let n = diag.len();
    debug_assert!(n >= 1 && lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c: Vec<R> = Vec::with_capacity(n);
    let mut d: Vec<R> = Vec::with_capacity(n);
    c.push(upper[0] / diag[0]);
    d.push(rhs[0] / diag[0]);
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c.push(upper[i] / m);
        d.push((rhs[i] - lower[i] * d[i - 1]) / m);
    }
    let mut x = d.clone();
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}
