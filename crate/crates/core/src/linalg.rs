//! Small dense linear-algebra helpers shared by the filters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use std::f64::consts::PI;

/// `(A + A') / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub(crate) fn cholesky(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Cholesky::new(a.clone())
}

/// Log-density of a zero-mean Gaussian with factorized covariance, evaluated
/// at `residual`.
pub(crate) fn gaussian_log_density(residual: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let n = residual.len() as f64;
    let l = chol.l_dirty();
    let log_det: f64 = 2.0 * (0..residual.len()).map(|i| l[(i, i)].ln()).sum::<f64>();
    let solved = chol.solve(residual);
    let maha = residual.dot(&solved);
    -0.5 * (n * (2.0 * PI).ln() + log_det + maha)
}

/// Largest absolute asymmetry relative to the largest entry.
pub(crate) fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(1.0);
    (a - a.transpose()).amax() / scale
}

pub(crate) fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}
