//! Thin wrappers over the LAPACK-backed routines used elsewhere in the crate.

use crate::error::{MklError, Result};
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};

/// Symmetric eigendecomposition with eigenvalues in *descending* order.
///
/// The input is symmetrized as (A + Aᵀ)/2 before factorization so callers may
/// pass matrices that are symmetric only up to floating-point noise.
pub(crate) fn eigh_desc(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(MklError::DimensionMismatch(format!(
            "eigh needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let sym = (a + &a.t()) * 0.5;
    let (vals, vecs) = sym
        .eigh(UPLO::Lower)
        .map_err(|e| MklError::Numerical(format!("symmetric eigensolver failed: {e}")))?;
    // LAPACK returns ascending order; flip eigenvalues and the column order.
    let mut out_vals = Vec::with_capacity(n);
    let mut out_vecs = Array2::<f64>::zeros((n, n));
    for (dst, src) in (0..n).zip((0..n).rev()) {
        out_vals.push(vals[src]);
        out_vecs.column_mut(dst).assign(&vecs.column(src));
    }
    Ok((out_vals, out_vecs))
}

/// Euclidean norm of a slice.
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean norm of an ndarray vector.
pub(crate) fn norm1d(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigh_desc_orders_descending_and_reconstructs() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 1.0]];
        let (vals, vecs) = eigh_desc(&a).unwrap();
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        // Reconstruct A = U diag(vals) Uᵀ.
        let d = Array2::from_diag(&Array1::from(vals.clone()));
        let rec = vecs.dot(&d).dot(&vecs.t());
        for (x, y) in a.iter().zip(rec.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
        // Orthonormal columns.
        let gram = vecs.t().dot(&vecs);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eigh_desc_rejects_rectangular() {
        let a = Array2::<f64>::zeros((2, 3));
        assert!(eigh_desc(&a).is_err());
    }
}
