use nalgebra::{DVector, SymmetricEigen};

use super::spd::symmetrize;
use super::SpdMatrix;
use crate::error::{Error, Result};
use crate::model::ClusterModel;

/// `tr((S_b^{1/2} S_a S_b^{1/2})^{1/2})`, the cross term of the Bures metric.
pub fn bures_trace_term(a: &SpdMatrix, b: &SpdMatrix) -> f64 {
    let root_b = b.sqrt();
    let inner = symmetrize(root_b.as_matrix() * a.as_matrix() * root_b.as_matrix());
    SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|e| e.max(0.0).sqrt())
        .sum()
}

fn check_pair(mean_a: &DVector<f64>, cov_a: &SpdMatrix, mean_b: &DVector<f64>, cov_b: &SpdMatrix) -> Result<()> {
    let d = mean_a.len();
    for found in [cov_a.dim(), mean_b.len(), cov_b.dim()] {
        if found != d {
            return Err(Error::DimensionMismatch { expected: d, found });
        }
    }
    Ok(())
}

/// Squared 2-Wasserstein distance between `N(m_a, S_a)` and `N(m_b, S_b)`.
pub fn gaussian_w2_squared(a: &ClusterModel, b: &ClusterModel) -> Result<f64> {
    check_pair(&a.mean, &a.cov, &b.mean, &b.cov)?;
    let shift = (&a.mean - &b.mean).norm_squared();
    if a.cov == b.cov {
        return Ok(shift);
    }
    // fixed argument order keeps the result bitwise symmetric
    let (first, second) = if covariance_order(&a.cov, &b.cov).is_le() {
        (&a.cov, &b.cov)
    } else {
        (&b.cov, &a.cov)
    };
    let bures = a.cov.trace() + b.cov.trace() - 2.0 * bures_trace_term(first, second);
    Ok(shift + bures.max(0.0))
}

fn covariance_order(a: &SpdMatrix, b: &SpdMatrix) -> std::cmp::Ordering {
    a.as_matrix()
        .iter()
        .zip(b.as_matrix().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// 2-Wasserstein distance between the Gaussians of two cluster models.
///
/// Uses `W₂² = ‖m_a − m_b‖² + tr(S_a + S_b − 2 (S_b^{1/2} S_a S_b^{1/2})^{1/2})`.
/// Identical covariances short-circuit the Bures term to exactly zero.
pub fn gaussian_w2(a: &ClusterModel, b: &ClusterModel) -> Result<f64> {
    gaussian_w2_squared(a, b).map(f64::sqrt)
}
