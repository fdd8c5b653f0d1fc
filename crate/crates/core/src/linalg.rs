//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TrexError};

/// Moore-Penrose pseudo-inverse via SVD; singular values below
/// `max(rows, cols) * eps * sigma_max` are treated as zero.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * smax;
    svd.pseudo_inverse(tol).map_err(|e| TrexError::Internal(format!("pseudo-inverse failed: {e}")))
}

/// Minimum-norm least-squares coefficients `(X^T X)^+ X^T y`.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let gram = x.tr_mul(x);
    Ok(pseudo_inverse(&gram)? * x.tr_mul(y))
}

/// Largest eigenvalue of `X^T X` by power iteration.
pub fn gram_spectral_norm(x: &DMatrix<f64>, iterations: usize) -> f64 {
    let p = x.ncols();
    let mut v = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    // Perturb so the start is not orthogonal to the leading eigenvector for symmetric designs.
    for (k, vk) in v.iter_mut().enumerate() {
        *vk *= 1.0 + 1e-3 * (k as f64).sin();
    }
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let w = x.tr_mul(&(x * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.norm();
        v = w / norm;
    }
    lambda
}

/// Ridge coefficients `(X^T X + mu I)^{-1} X^T y`, computed through the smaller
/// of the two Gram matrices.
pub fn ridge(x: &DMatrix<f64>, y: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let fail = || TrexError::Internal("ridge system is not positive definite".into());
    if p <= n {
        let mut g = x.tr_mul(x);
        for i in 0..p {
            g[(i, i)] += mu;
        }
        let chol = g.cholesky().ok_or_else(fail)?;
        Ok(chol.solve(&x.tr_mul(y)))
    } else {
        let mut g = x * x.transpose();
        for i in 0..n {
            g[(i, i)] += mu;
        }
        let chol = g.cholesky().ok_or_else(fail)?;
        Ok(x.tr_mul(&chol.solve(y)))
    }
}
