//! Metaclustering of a summary database and template formation.

mod barycenter;
mod formation;
mod hdbscan;
mod hierarchy;
mod kbarycenter;
mod pipeline;

pub use barycenter::{gaussian_barycenter, BarycenterFit, BarycenterOptions};
pub use formation::{template_density, template_id, template_kbarycenter, template_pooling, Template};
pub use hdbscan::density_cluster;
pub use hierarchy::{
    auto_group_count, cut_tree, hierarchical_cluster, Dendrogram, Linkage, Merge, MetaPartition,
};
pub use kbarycenter::{k_barycenter, trimmed_count, KBarycenterFit};
pub use pipeline::{optimal_flow_templates, GroupCount, MetaMethod, TemplateConfig, TemplateMethod, TemplatesOutcome};
