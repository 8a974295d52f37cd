//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{BnseError, Result};

/// Relative jitter applied on the first factorization attempt.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor together with the diagonal jitter that made it exist.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    /// Absolute jitter added to the diagonal.
    pub jitter: f64,
}

/// Factorizes `matrix + jitter * I`, starting at `JITTER_START * scale` and
/// escalating by 10x up to `JITTER_MAX * scale`.
pub fn cholesky_with_jitter(matrix: &DMatrix<f64>, scale: f64, what: &str) -> Result<JitteredCholesky> {
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * scale;
        let mut m = matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(factor) = Cholesky::new(m) {
            if rel > JITTER_START {
                log::info!("{what}: factorized with escalated jitter {jitter:.3e}");
            }
            return Ok(JitteredCholesky { factor, jitter });
        }
        if rel >= JITTER_MAX * (1.0 - 1e-12) {
            return Err(BnseError::NotPositiveDefinite {
                what: what.to_string(),
                jitter,
            });
        }
        rel *= 10.0;
    }
}

/// log det of the factorized matrix.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `A⁻¹ = L⁻ᵀ L⁻¹`. The product goes through the blocked GEMM kernel, which
/// is several times faster than `Cholesky::inverse` at a few hundred rows.
pub fn cholesky_inverse(chol: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let n = chol.l_dirty().nrows();
    let mut l_inv = DMatrix::identity(n, n);
    chol.l().solve_lower_triangular_mut(&mut l_inv);
    l_inv.transpose() * &l_inv
}

/// Solves `L x = b` for the lower Cholesky factor, in place column-wise.
pub fn forward_solve(chol: &Cholesky<f64, Dyn>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let l = chol.l();
    l.solve_lower_triangular(b)
        .expect("Cholesky factor has a nonzero diagonal")
}

pub fn forward_solve_vec(chol: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    chol.l()
        .solve_lower_triangular(b)
        .expect("Cholesky factor has a nonzero diagonal")
}

/// Entries below this fraction of the largest one are zeroed before an eigendecomposition.
/// nalgebra's Householder step squares entries and returns NaN once those squares underflow.
pub const EIGEN_FLUSH: f64 = 1e-150;

/// Eigendecomposition of a symmetric matrix, normalized by its largest entry
/// and with negligible entries flushed to zero.
pub fn symmetric_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, Dyn>> {
    let top = m.amax();
    if !top.is_finite() {
        return Err(BnseError::Eigen(format!("{what}: non-finite entries")));
    }
    if top == 0.0 {
        return Ok(SymmetricEigen::new(m.clone()));
    }
    let scaled = m.map(|v| if v.abs() < EIGEN_FLUSH * top { 0.0 } else { v / top });
    let mut eig = SymmetricEigen::try_new(scaled, 1e-14, 10_000)
        .ok_or_else(|| BnseError::Eigen(format!("{what}: did not converge")))?;
    if eig
        .eigenvalues
        .iter()
        .chain(eig.eigenvectors.iter())
        .any(|v| !v.is_finite())
    {
        return Err(BnseError::Eigen(format!("{what}: non-finite result")));
    }
    eig.eigenvalues *= top;
    Ok(eig)
}

/// Mean of the diagonal, used as the scale for relative jitter.
pub fn mean_diagonal(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.diagonal().iter().map(|v| v.abs()).sum::<f64>() / m.nrows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_survives_underflowing_entries() {
        use crate::kernels::{SmComponent, SmKernel};
        use crate::spectrum::{prior_cov_exact_sm, real_imag_covs, WindowConfig};
        // real-part prior covariance whose corner entries are around 1e-165
        let kernel = SmKernel::new(vec![SmComponent::new(
            1.0184165654800466,
            0.021756344817314737,
            0.13760911033003104,
        )])
        .unwrap();
        let w = WindowConfig::new(0.5906255799692925, 0.0).unwrap();
        let span = 3.6272975570661434;
        let grid: Vec<f64> = (0..30).map(|i| -span + 2.0 * span * i as f64 / 29.0).collect();
        let kf = |a, b| prior_cov_exact_sm(&kernel, &w, a, b);
        let m = DMatrix::from_fn(30, 30, |i, j| real_imag_covs(kf, grid[i], grid[j]).0);

        let eig = symmetric_eigen(&m, "prior").unwrap();
        let recon = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues) * eig.eigenvectors.transpose();
        assert!((recon - &m).amax() < 1e-12);
        assert!(eig.eigenvalues.min() >= -1e-14 * m.trace());
    }

    #[test]
    fn escalates_jitter_on_singular_matrix() {
        // rank one: [1 1; 1 1]
        let m = DMatrix::from_element(2, 2, 1.0);
        let f = cholesky_with_jitter(&m, 1.0, "rank-one").unwrap();
        assert!(f.jitter >= JITTER_START);
        assert!(f.jitter <= JITTER_MAX);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = cholesky_with_jitter(&m, 1.0, "indefinite").unwrap_err();
        assert!(matches!(err, BnseError::NotPositiveDefinite { .. }));
    }

    #[test]
    fn log_det_matches_product_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let f = Cholesky::new(m).unwrap();
        assert!((log_det(&f) - 36f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = DMatrix::from_fn(5, 5, |i, j| {
            1.0 / (1.0 + i as f64 + j as f64) + if i == j { 1.0 } else { 0.0 }
        });
        let inv = cholesky_inverse(&Cholesky::new(m.clone()).unwrap());
        assert!((inv * m - DMatrix::identity(5, 5)).amax() < 1e-12);
    }
}
