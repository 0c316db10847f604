use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::CytometrySummary;
use crate::transport::{solve_discrete_ot, CostMatrix, TransportPlan};

use super::cluster::{cost_matrix, symmetric_kl, ClusterMetric};

/// Optimal transport cost between two summaries.
pub fn d_ot(a: &CytometrySummary, b: &CytometrySummary, metric: ClusterMetric) -> Result<f64> {
    let cost = cost_matrix(a, b, metric)?;
    exact_cost(a, b, &cost)
}

/// The independent coupling is feasible, so the optimum never exceeds its
/// cost; the bound absorbs rounding when the two coincide.
fn exact_cost(a: &CytometrySummary, b: &CytometrySummary, cost: &CostMatrix) -> Result<f64> {
    let ot = solve_discrete_ot(&a.measure(), &b.measure(), cost)?.cost();
    Ok(ot.min(naive_cost(&a.weights(), &b.weights(), cost)))
}

/// The optimal coupling between the cluster weights of `a` (rows) and `b` (columns).
pub fn optimal_plan(a: &CytometrySummary, b: &CytometrySummary, metric: ClusterMetric) -> Result<TransportPlan> {
    let cost = cost_matrix(a, b, metric)?;
    solve_discrete_ot(&a.measure(), &b.measure(), &cost)
}

/// Cost of the independent coupling `Σ_k Σ_l p_k q_l d(a_k, b_l)`.
pub fn d_nt(a: &CytometrySummary, b: &CytometrySummary, metric: ClusterMetric) -> Result<f64> {
    let cost = cost_matrix(a, b, metric)?;
    Ok(naive_cost(&a.weights(), &b.weights(), &cost))
}

fn naive_cost(p: &[f64], q: &[f64], cost: &CostMatrix) -> f64 {
    let mut terms = Vec::with_capacity(p.len() * q.len());
    for (k, pk) in p.iter().enumerate() {
        for (l, ql) in q.iter().enumerate() {
            terms.push(pk * ql * cost.get(k, l));
        }
    }
    ordered_sum(terms)
}

/// Sum in ascending order, so that swapping the arguments gives the same bits.
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Result of [`similarity_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityDistance {
    pub value: f64,
    pub d_ot: f64,
    pub d_nt: f64,
    /// Set when `d_NT = 0`, in which case `value` is 0 by convention.
    pub degenerate: bool,
}

/// `d_OT / d_NT`, in `[0, 1]`.
pub fn similarity_distance(
    a: &CytometrySummary,
    b: &CytometrySummary,
    metric: ClusterMetric,
) -> Result<SimilarityDistance> {
    let cost = cost_matrix(a, b, metric)?;
    let ot = exact_cost(a, b, &cost)?;
    let nt = naive_cost(&a.weights(), &b.weights(), &cost);
    if nt <= 0.0 {
        log::warn!(
            "similarity distance between '{}' and '{}' is degenerate (d_NT = 0); using 0",
            a.source_id,
            b.source_id
        );
        return Ok(SimilarityDistance {
            value: 0.0,
            d_ot: ot,
            d_nt: nt,
            degenerate: true,
        });
    }
    Ok(SimilarityDistance {
        value: (ot / nt).clamp(0.0, 1.0),
        d_ot: ot,
        d_nt: nt,
        degenerate: false,
    })
}

/// Unweighted mean of the symmetric KL divergence over all cluster pairs.
pub fn mean_kl_partition_distance(a: &CytometrySummary, b: &CytometrySummary) -> Result<f64> {
    a.check_same_dim(b)?;
    let mut terms = Vec::with_capacity(a.len() * b.len());
    for ca in a.clusters() {
        for cb in b.clusters() {
            terms.push(symmetric_kl(ca, cb)?);
        }
    }
    Ok(ordered_sum(terms) / (a.len() * b.len()) as f64)
}

/// Distance between whole summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartitionMetric {
    Similarity(ClusterMetric),
    OptimalTransport(ClusterMetric),
    NaiveTransport(ClusterMetric),
    MeanKl,
}

impl Default for PartitionMetric {
    fn default() -> Self {
        PartitionMetric::Similarity(ClusterMetric::GaussianW2)
    }
}

impl PartitionMetric {
    /// Cluster distance underneath, if the metric has one.
    pub fn cluster_metric(&self) -> Option<ClusterMetric> {
        match *self {
            PartitionMetric::Similarity(m) | PartitionMetric::OptimalTransport(m) | PartitionMetric::NaiveTransport(m) => {
                Some(m)
            }
            PartitionMetric::MeanKl => None,
        }
    }

    pub fn distance(&self, a: &CytometrySummary, b: &CytometrySummary) -> Result<f64> {
        match *self {
            PartitionMetric::Similarity(m) => Ok(similarity_distance(a, b, m)?.value),
            PartitionMetric::OptimalTransport(m) => d_ot(a, b, m),
            PartitionMetric::NaiveTransport(m) => d_nt(a, b, m),
            PartitionMetric::MeanKl => mean_kl_partition_distance(a, b),
        }
    }
}

impl fmt::Display for PartitionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionMetric::Similarity(m) => write!(f, "similarity:{m}"),
            PartitionMetric::OptimalTransport(m) => write!(f, "ot:{m}"),
            PartitionMetric::NaiveTransport(m) => write!(f, "naive:{m}"),
            PartitionMetric::MeanKl => f.write_str("mean-kl"),
        }
    }
}

impl FromStr for PartitionMetric {
    type Err = Error;

    /// `similarity[:metric]`, `ot[:metric]`, `naive[:metric]` or `mean-kl`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, cluster) = match s.split_once(':') {
            Some((k, c)) => (k, c.parse()?),
            None => (s, ClusterMetric::default()),
        };
        match kind {
            "similarity" => Ok(PartitionMetric::Similarity(cluster)),
            "ot" => Ok(PartitionMetric::OptimalTransport(cluster)),
            "naive" => Ok(PartitionMetric::NaiveTransport(cluster)),
            "mean-kl" => Ok(PartitionMetric::MeanKl),
            other => Err(Error::invalid(format!("unknown partition metric '{other}'"))),
        }
    }
}
