use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::CytometrySummary;
use crate::partition::{cost_matrix, optimal_plan, ClusterMetric};

/// Label given to clusters left without a partner.
pub const UNMATCHED: &str = "unmatched";

/// Minimum-cost assignment of rows to columns of a rectangular cost matrix.
///
/// Returns, for each row, its column (`None` for rows left over when there
/// are more rows than columns) and the total cost of the matched pairs.
/// Shortest augmenting paths with potentials, `O(n³)`.
pub fn hungarian(cost: &DMatrix<f64>) -> Result<(Vec<Option<usize>>, f64)> {
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return Ok((vec![None; rows], 0.0));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("assignment costs must be finite"));
    }
    let transpose = rows > cols;
    let c = if transpose { cost.transpose() } else { cost.clone() };
    let (n, m) = c.shape();

    // 1-based potentials and matching, column 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = c[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![None; n];
    for j in 1..=m {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = Some(j - 1);
        }
    }
    let total = row_to_col
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| c[(i, j)]))
        .sum();
    if !transpose {
        return Ok((row_to_col, total));
    }
    let mut assignment = vec![None; rows];
    for (j, i) in row_to_col.iter().enumerate() {
        if let Some(i) = i {
            assignment[*i] = Some(j);
        }
    }
    Ok((assignment, total))
}

/// One-to-one matching of the clusters of `u` onto those of `reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct HungarianRelabelling {
    /// Reference cluster matched to each cluster of `u`.
    pub matching: Vec<Option<usize>>,
    /// New label of each cluster of `u`.
    pub labels: Vec<String>,
    pub total_cost: f64,
}

/// Matches the clusters of `u` to those of `reference` at minimum total cost.
///
/// The cost matrix is padded to a square with dummy entries worth ten times
/// the largest real cost; clusters of `u` matched to a dummy get the label
/// [`UNMATCHED`].
pub fn hungarian_relabel(
    u: &CytometrySummary,
    reference: &CytometrySummary,
    metric: ClusterMetric,
) -> Result<HungarianRelabelling> {
    let cost = cost_matrix(u, reference, metric)?;
    let real = cost.as_matrix();
    let size = real.nrows().max(real.ncols());
    let dummy = 10.0 * real.max().max(f64::MIN_POSITIVE);
    let padded = DMatrix::from_fn(size, size, |i, j| {
        if i < real.nrows() && j < real.ncols() {
            real[(i, j)]
        } else {
            dummy
        }
    });
    let (assignment, _) = hungarian(&padded)?;
    let matching: Vec<Option<usize>> = assignment[..real.nrows()]
        .iter()
        .map(|j| j.filter(|&j| j < real.ncols()))
        .collect();
    let total_cost = matching
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| real[(i, j)]))
        .sum();
    let labels = matching
        .iter()
        .map(|j| match j {
            Some(j) => reference_label(reference, *j),
            None => UNMATCHED.to_string(),
        })
        .collect();
    Ok(HungarianRelabelling {
        matching,
        labels,
        total_cost,
    })
}

fn reference_label(reference: &CytometrySummary, k: usize) -> String {
    reference.clusters()[k]
        .label
        .clone()
        .unwrap_or_else(|| format!("cluster-{k}"))
}

/// Fuzzy relabelling of the clusters of `u` from the optimal transport plan.
///
/// Rows index the reference clusters `k`, columns the clusters `l` of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyRelabelling {
    pub plan: DMatrix<f64>,
    /// `s^l_k = w*_kl / p^u_l`, the share of cluster `l` coming from `k`.
    pub scores: DMatrix<f64>,
    /// `s̃^l_k = s^l_k · w*_kl / p^ref_k`.
    pub weighted_scores: DMatrix<f64>,
    reference_labels: Vec<String>,
}

impl FuzzyRelabelling {
    /// Reference cluster with the largest weighted score for each cluster of `u`.
    pub fn hard_assignment(&self) -> Vec<usize> {
        (0..self.weighted_scores.ncols())
            .map(|l| {
                let col = self.weighted_scores.column(l);
                let mut best = 0;
                for k in 1..col.len() {
                    if col[k] > col[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn hard_labels(&self) -> Vec<String> {
        self.hard_assignment().into_iter().map(|k| self.reference_labels[k].clone()).collect()
    }
}

/// Scores from the optimal coupling of `reference` (source) and `u` (target).
pub fn fuzzy_relabel(
    u: &CytometrySummary,
    reference: &CytometrySummary,
    metric: ClusterMetric,
) -> Result<FuzzyRelabelling> {
    let plan = optimal_plan(reference, u, metric)?.into_plan();
    let p = reference.weights();
    let q = u.weights();
    let scores = DMatrix::from_fn(plan.nrows(), plan.ncols(), |k, l| (plan[(k, l)] / q[l]).clamp(0.0, 1.0));
    let weighted_scores = DMatrix::from_fn(plan.nrows(), plan.ncols(), |k, l| {
        (scores[(k, l)] * plan[(k, l)] / p[k]).clamp(0.0, 1.0)
    });
    let reference_labels = (0..reference.len()).map(|k| reference_label(reference, k)).collect();
    Ok(FuzzyRelabelling {
        plan,
        scores,
        weighted_scores,
        reference_labels,
    })
}
