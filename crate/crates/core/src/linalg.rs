//! Thin wrappers over the dense eigensolvers.
//!
//! All factorizations run sequentially so results do not depend on the
//! size of any thread pool.

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending.
///
/// Eigenvectors are returned column-by-column as plain vectors with a
/// deterministic sign (first significant entry positive).
pub fn symmetric_eigen(matrix: &Mat<f64>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = matrix.nrows();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let evd = matrix
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let mut vectors = Vec::with_capacity(n);
    for j in 0..n {
        let mut v: Vec<f64> = (0..n).map(|i| u[(i, j)]).collect();
        fix_sign(&mut v);
        vectors.push(v);
    }
    Ok((values, vectors))
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(matrix: &Mat<f64>) -> Result<Vec<f64>> {
    if matrix.nrows() == 0 {
        return Ok(Vec::new());
    }
    matrix
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigenvalues failed: {e:?}")))
}

/// Eigenvalues of a complex Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(matrix: &Mat<Complex64>) -> Result<Vec<f64>> {
    if matrix.nrows() == 0 {
        return Ok(Vec::new());
    }
    matrix
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigenvalues failed: {e:?}")))
}

/// Sum of absolute eigenvalues of the Hermitian part of `matrix`.
pub fn trace_norm(matrix: &Mat<Complex64>) -> Result<f64> {
    let h = hermitian_part(matrix);
    Ok(hermitian_eigenvalues(&h)?.iter().map(|x| x.abs()).sum())
}

/// `(A + A^†) / 2`.
pub fn hermitian_part(matrix: &Mat<Complex64>) -> Mat<Complex64> {
    let n = matrix.nrows();
    Mat::from_fn(n, n, |i, j| (matrix[(i, j)] + matrix[(j, i)].conj()) * 0.5)
}

/// Largest `|A_ij - conj(A_ji)|`.
pub fn hermiticity_defect(matrix: &Mat<Complex64>) -> f64 {
    let n = matrix.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((matrix[(i, j)] - matrix[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest absolute entry.
pub fn max_abs(matrix: &Mat<Complex64>) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..matrix.ncols() {
        for i in 0..matrix.nrows() {
            worst = worst.max(matrix[(i, j)].norm());
        }
    }
    worst
}

fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_symmetric() {
        let m = Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 1.0 });
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 3.0).abs() < 1e-14);
        let dot: f64 = vecs[0].iter().zip(&vecs[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-14);
        assert!(vecs[1][0] > 0.0);
    }

    #[test]
    fn trace_norm_of_orthogonal_projectors() {
        let a = Mat::from_fn(2, 2, |i, j| {
            if i == j && i == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        let b = Mat::from_fn(2, 2, |i, j| {
            if i == j && i == 1 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        let d = Mat::from_fn(2, 2, |i, j| a[(i, j)] - b[(i, j)]);
        assert!((trace_norm(&d).unwrap() - 2.0).abs() < 1e-14);
    }
}
