use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::model::{ClusterModel, CytometrySummary};
use crate::transport::{gaussian_w2, gaussian_w2_squared, CostMatrix};

use super::summarize::subsample_rows;
use super::DEFAULT_SUBSAMPLE_CAP;

/// Seed used when the empirical distance has to subsample.
pub const EMPIRICAL_SEED: u64 = 0x0e3a_11ce;

/// Distance between two clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ClusterMetric {
    /// `W₂` between the fitted Gaussians.
    #[default]
    GaussianW2,
    /// `W₂²` between the fitted Gaussians.
    GaussianW2Squared,
    /// Symmetric Kullback–Leibler divergence between the fitted Gaussians.
    SymmetricKl,
    /// Mean squared Euclidean distance between member events; needs cluster support.
    Empirical,
}

impl ClusterMetric {
    pub fn distance(&self, a: &ClusterModel, b: &ClusterModel) -> Result<f64> {
        match self {
            ClusterMetric::GaussianW2 => gaussian_w2(a, b),
            ClusterMetric::GaussianW2Squared => gaussian_w2_squared(a, b),
            ClusterMetric::SymmetricKl => symmetric_kl(a, b),
            ClusterMetric::Empirical => {
                let (Some(sa), Some(sb)) = (&a.support, &b.support) else {
                    return Err(Error::Configuration(
                        "empirical cluster distance needs clusters that keep their events".into(),
                    ));
                };
                empirical_cluster_distance(sa, sb, DEFAULT_SUBSAMPLE_CAP)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClusterMetric::GaussianW2 => "w2",
            ClusterMetric::GaussianW2Squared => "w2-squared",
            ClusterMetric::SymmetricKl => "kl",
            ClusterMetric::Empirical => "empirical",
        }
    }
}

impl fmt::Display for ClusterMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClusterMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w2" | "wasserstein" => Ok(ClusterMetric::GaussianW2),
            "w2-squared" => Ok(ClusterMetric::GaussianW2Squared),
            "kl" | "symmetric-kl" => Ok(ClusterMetric::SymmetricKl),
            "empirical" => Ok(ClusterMetric::Empirical),
            other => Err(Error::invalid(format!("unknown cluster metric '{other}'"))),
        }
    }
}

/// Pairwise cluster costs `d(a_k, b_l)`.
pub fn cost_matrix(a: &CytometrySummary, b: &CytometrySummary, metric: ClusterMetric) -> Result<CostMatrix> {
    a.check_same_dim(b)?;
    let mut entries = DMatrix::zeros(a.len(), b.len());
    for (k, ca) in a.clusters().iter().enumerate() {
        for (l, cb) in b.clusters().iter().enumerate() {
            entries[(k, l)] = metric.distance(ca, cb)?;
        }
    }
    CostMatrix::new(entries)
}

/// `½ (KL(N_a‖N_b) + KL(N_b‖N_a))` for the clusters' Gaussians.
///
/// The log-determinants cancel, leaving
/// `¼ [tr(S_b⁻¹S_a) + tr(S_a⁻¹S_b) + Δᵀ(S_a⁻¹ + S_b⁻¹)Δ − 2d]`.
pub fn symmetric_kl(a: &ClusterModel, b: &ClusterModel) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if a.same_gaussian(b) {
        return Ok(0.0);
    }
    let inv_a = spd_inverse(a.cov.as_matrix())?;
    let inv_b = spd_inverse(b.cov.as_matrix())?;
    let delta = &a.mean - &b.mean;
    let cross = (&inv_b * a.cov.as_matrix()).trace() + (&inv_a * b.cov.as_matrix()).trace();
    let maha = (delta.transpose() * (&inv_a + &inv_b) * &delta)[(0, 0)];
    let d = a.dim() as f64;
    Ok((0.25 * (cross + maha - 2.0 * d)).max(0.0))
}

fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::invalid("covariance is singular"))?;
    let diag_min = chol.l_dirty().diagonal().min();
    let diag_max = chol.l_dirty().diagonal().max();
    if !(diag_min > 1e-7 * diag_max) {
        return Err(Error::invalid("covariance is singular"));
    }
    Ok(chol.inverse())
}

/// Mean squared Euclidean distance between the rows of `a` and of `b`.
///
/// Sets larger than `subsample_cap` are replaced by a fixed-seed uniform
/// subsample of that size. The double sum is evaluated through the
/// centred identity `mean‖x − x̄‖² + mean‖y − x̄‖²`.
pub fn empirical_cluster_distance(a: &DMatrix<f64>, b: &DMatrix<f64>, subsample_cap: usize) -> Result<f64> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::invalid("empirical cluster distance needs nonempty clusters"));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            found: b.ncols(),
        });
    }
    if subsample_cap == 0 {
        return Err(Error::invalid("subsample_cap must be positive"));
    }
    let a = subsample_rows(a, subsample_cap, EMPIRICAL_SEED);
    let b = subsample_rows(b, subsample_cap, EMPIRICAL_SEED);
    let center: Vec<f64> = a.column_iter().map(|c| c.mean()).collect();
    let spread = |rows: &DMatrix<f64>| -> f64 {
        rows.row_iter()
            .map(|r| r.iter().zip(&center).map(|(x, c)| (x - c) * (x - c)).sum::<f64>())
            .sum::<f64>()
            / rows.nrows() as f64
    };
    Ok(spread(&a) + spread(&b))
}
