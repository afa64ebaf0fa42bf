//! Bridges between the `ndarray` matrices used throughout the crate and the
//! dense factorizations provided by `faer`.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

fn to_faer(m: &Array2<C64>) -> Mat<C64> {
    let (r, c) = m.dim();
    Mat::from_fn(r, c, |i, j| m[[i, j]])
}

fn hermitian_part(m: &Array2<C64>) -> Mat<C64> {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]].conj()))
}

/// Ascending eigenvalues and eigenvector columns of a Hermitian matrix.
/// Only the Hermitian part of `m` is used.
pub(crate) fn hermitian_eigen(m: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    let eig = hermitian_part(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NumericalFailure(format!("Hermitian eigensolver: {e:?}")))?;
    let (s, u) = (eig.S(), eig.U());
    let n = m.nrows();
    Ok(((0..n).map(|k| s[k].re).collect(), Array2::from_shape_fn((n, n), |(i, j)| u[(i, j)])))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub(crate) fn min_eigenvalue(m: &Array2<C64>) -> Result<f64> {
    let values = hermitian_part(m)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::NumericalFailure(format!("Hermitian eigensolver: {e:?}")))?;
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

/// Solves `a x = b` by LU decomposition with partial pivoting.
pub(crate) fn solve(a: &Array2<C64>, b: &Array2<C64>) -> Result<Array2<C64>> {
    let x = to_faer(a).partial_piv_lu().solve(to_faer(b));
    let out = Array2::from_shape_fn((x.nrows(), x.ncols()), |(i, j)| x[(i, j)]);
    if out.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NumericalFailure("singular matrix in linear solve".into()))
    }
}
