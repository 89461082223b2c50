//! Thin adapters over nalgebra for the two dense factorizations the crate
//! needs: symmetric eigendecomposition of small basis Grams and Cholesky
//! solves on active-set score matrices.

use ndarray::{Array1, Array2, ArrayView2};

fn to_na(a: ArrayView2<'_, f64>) -> nalgebra::DMatrix<f64> {
    let (r, c) = a.dim();
    nalgebra::DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

/// Eigendecomposition of a symmetric matrix. Returns (eigenvalues, eigenvectors)
/// with eigenvectors in columns, so `a = V diag(w) V^T`.
pub fn eigh(a: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let se = nalgebra::SymmetricEigen::new(to_na(a));
    let w = Array1::from_iter(se.eigenvalues.iter().copied());
    let v = Array2::from_shape_fn((n, n), |(i, j)| se.eigenvectors[(i, j)]);
    (w, v)
}

/// Solve `a x = b` for symmetric positive definite `a` via Cholesky.
/// Returns `None` when the factorization fails (matrix not PD).
pub fn cholesky_solve(a: ArrayView2<'_, f64>, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    debug_assert_eq!(n, b.len());
    let chol = nalgebra::Cholesky::new(to_na(a))?;
    let x = chol.solve(&nalgebra::DVector::from_column_slice(b));
    Some(x.iter().copied().collect())
}
