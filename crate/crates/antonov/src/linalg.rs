//! Thin wrappers over dense linear algebra.

use faer::linalg::solvers::Solve;
use faer::{Accum, Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// a · b.
pub fn mm<T: faer::traits::ComplexField>(a: MatRef<'_, T>, b: MatRef<'_, T>) -> Mat<T> {
    let mut out = Mat::<T>::zeros(a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(
        out.as_mut(),
        Accum::Replace,
        a,
        b,
        T::from_f64_impl(1.0),
        faer::get_global_parallelism(),
    );
    out
}

/// aᵀ · b.
pub fn mm_tn<T: faer::traits::ComplexField>(a: MatRef<'_, T>, b: MatRef<'_, T>) -> Mat<T> {
    mm(a.transpose(), b)
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix, read from its lower triangle.
pub fn sym_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::solver(format!("symmetric eigensolver failed: {e:?}")))?;
    let vals = e.S().column_vector().iter().copied().collect();
    Ok((vals, e.U().to_owned()))
}

/// Eigenvalues (ascending) of a symmetric matrix.
pub fn sym_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::solver(format!("symmetric eigensolver failed: {e:?}")))
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(a: MatRef<'_, C64>) -> Result<Vec<C64>> {
    a.eigenvalues()
        .map_err(|e| Error::solver(format!("eigensolver failed: {e:?}")))
}

/// Spectral norm (largest singular value).
pub fn norm2<T: faer::traits::ComplexField<Real = f64>>(a: MatRef<'_, T>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let s = a
        .singular_values()
        .map_err(|e| Error::solver(format!("singular value solver failed: {e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// Singular values in nonincreasing order.
pub fn singular_values<T: faer::traits::ComplexField<Real = f64>>(a: MatRef<'_, T>) -> Result<Vec<f64>> {
    a.singular_values()
        .map_err(|e| Error::solver(format!("singular value solver failed: {e:?}")))
}

/// Solves a x = b for a general complex square matrix.
pub fn solve(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Mat<C64> {
    a.partial_piv_lu().solve(b)
}

/// Real matrix promoted to complex.
pub fn to_complex(a: MatRef<'_, f64>) -> Mat<C64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| C64::new(a[(i, j)], 0.0))
}

/// Column vector from a slice.
pub fn col<T: Copy + faer::traits::ComplexField>(v: &[T]) -> Mat<T> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Conjugate transpose.
pub fn adjoint(a: MatRef<'_, C64>) -> Mat<C64> {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}
