//! Gaussian summaries of gated cytometries and distances between them.

mod cluster;
mod distance;
mod matrix;
mod summarize;

pub use cluster::{cost_matrix, empirical_cluster_distance, symmetric_kl, ClusterMetric, EMPIRICAL_SEED};
pub use distance::{
    d_nt, d_ot, mean_kl_partition_distance, optimal_plan, similarity_distance, PartitionMetric,
    SimilarityDistance,
};
pub use matrix::{pairwise_distance_matrix, DistanceMatrix};
pub use summarize::{
    default_min_cluster_size, mean_and_covariance, subsample_rows, summarize_cytometry, COVARIANCE_RIDGE,
};

/// Largest event set compared exactly by the empirical cluster distance.
pub const DEFAULT_SUBSAMPLE_CAP: usize = 10_000;
