use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ClusterModel, CytometrySummary, LabeledEvents};
use crate::transport::SpdMatrix;

use super::DEFAULT_SUBSAMPLE_CAP;

/// Relative ridge added to every estimated covariance: `ε = 1e-6 · tr(S)/d`.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

const SUPPORT_SEED: u64 = 0x5eed_0f_c0ffee;

/// Smallest cluster kept by default: `d + 2` events.
pub fn default_min_cluster_size(d: usize) -> usize {
    d + 2
}

/// Reduces a gated cytometry to one Gaussian per label.
///
/// Labels with fewer than `min_cluster_size` events are dropped and the
/// remaining weights renormalized. Weights are relative retained sizes, or
/// uniform when `equal_weights` is set. Clusters are ordered by label, and
/// each keeps up to [`DEFAULT_SUBSAMPLE_CAP`] of its events as support.
pub fn summarize_cytometry(
    source_id: impl Into<String>,
    x: &LabeledEvents,
    min_cluster_size: usize,
    equal_weights: bool,
) -> Result<CytometrySummary> {
    let d = x.dim();
    if min_cluster_size < d + 1 {
        return Err(Error::invalid(format!(
            "min_cluster_size {min_cluster_size} is below d + 1 = {}",
            d + 1
        )));
    }
    let labels = x
        .labels()
        .ok_or_else(|| Error::invalid("cannot summarize unlabeled events"))?;

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (row, label) in labels.iter().enumerate() {
        groups.entry(label.as_str()).or_default().push(row);
    }
    let kept: Vec<(&str, Vec<usize>)> = groups
        .into_iter()
        .filter(|(_, rows)| rows.len() >= min_cluster_size)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptySummary { min_cluster_size });
    }

    let total: usize = kept.iter().map(|(_, rows)| rows.len()).sum();
    let k = kept.len();
    let mut clusters = Vec::with_capacity(k);
    for (label, rows) in kept {
        let members = x.events().select_rows(&rows);
        let (mean, cov) = mean_and_covariance(&members)?;
        let weight = if equal_weights {
            1.0 / k as f64
        } else {
            rows.len() as f64 / total as f64
        };
        let model = ClusterModel::new(mean, cov, weight, Some(label.to_string()))?
            .with_support(subsample_rows(&members, DEFAULT_SUBSAMPLE_CAP, SUPPORT_SEED))?;
        clusters.push(model);
    }
    CytometrySummary::renormalized(source_id, clusters)
}

/// Sample mean and unbiased covariance, plus the relative diagonal ridge.
pub fn mean_and_covariance(rows: &DMatrix<f64>) -> Result<(DVector<f64>, SpdMatrix)> {
    let n = rows.nrows();
    if n < 2 {
        return Err(Error::invalid("covariance needs at least two events"));
    }
    let mean = DVector::from_iterator(rows.ncols(), rows.column_iter().map(|c| c.mean()));
    let mut centered = rows.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
    add_ridge(&mut cov);
    Ok((mean, SpdMatrix::new(cov)?))
}

fn add_ridge(cov: &mut DMatrix<f64>) {
    let d = cov.nrows();
    let scale = cov.trace() / d as f64;
    let eps = if scale > 0.0 { COVARIANCE_RIDGE * scale } else { 1e-12 };
    for i in 0..d {
        cov[(i, i)] += eps;
    }
}

/// Rows kept verbatim when at most `cap`, else a sorted uniform subsample of size `cap`.
pub fn subsample_rows(rows: &DMatrix<f64>, cap: usize, seed: u64) -> DMatrix<f64> {
    if rows.nrows() <= cap {
        return rows.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, rows.nrows(), cap).into_vec();
    picked.sort_unstable();
    rows.select_rows(&picked)
}
