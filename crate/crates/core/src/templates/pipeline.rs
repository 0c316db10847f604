use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::CytometrySummary;
use crate::partition::{pairwise_distance_matrix, DistanceMatrix, PartitionMetric};

use super::barycenter::BarycenterOptions;
use super::formation::{template_density, template_kbarycenter, template_pooling, Template};
use super::hdbscan::density_cluster;
use super::hierarchy::{auto_group_count, cut_tree, hierarchical_cluster, Dendrogram, Linkage, MetaPartition};

/// How the database is grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaMethod {
    Hierarchical(Linkage),
    Hdbscan { min_cluster_size: usize },
}

impl Default for MetaMethod {
    fn default() -> Self {
        MetaMethod::Hierarchical(Linkage::Complete)
    }
}

/// How each group is condensed into a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateMethod {
    Pooling,
    Density { min_cluster_size: usize },
    KBarycenter { k: usize },
}

impl Default for TemplateMethod {
    fn default() -> Self {
        TemplateMethod::Pooling
    }
}

/// Number of groups cut from the dendrogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupCount {
    Fixed(usize),
    /// Cut at the widest gap between merge heights.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TemplateConfig {
    pub metric: PartitionMetric,
    pub meta: MetaMethod,
    pub template: TemplateMethod,
    /// Ignored by density-based metaclustering.
    pub groups: GroupCount,
    pub barycenter: BarycenterOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplatesOutcome {
    pub distances: DistanceMatrix,
    /// Present for hierarchical metaclustering.
    pub dendrogram: Option<Dendrogram>,
    pub partition: MetaPartition,
    /// One template per group, in group order.
    pub templates: Vec<Template>,
}

/// Groups a database of summaries and builds one template per group.
///
/// Summaries are compared with `config.metric`, grouped by the chosen
/// metaclustering method, and each group is condensed into a template.
/// A group with a single member uses that member as its template.
/// Entries left as noise by density-based grouping get no template.
pub fn optimal_flow_templates(db: &[CytometrySummary], config: &TemplateConfig) -> Result<TemplatesOutcome> {
    if db.len() < 2 {
        return Err(Error::invalid(format!("database needs at least 2 summaries, got {}", db.len())));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = db.iter().find(|s| !seen.insert(s.source_id.as_str())) {
        return Err(Error::invalid(format!("duplicate source id '{}'", dup.source_id)));
    }
    if config.template == TemplateMethod::Pooling {
        if let Some(s) = db.iter().find(|s| !s.is_labeled()) {
            return Err(Error::Configuration(format!(
                "pooling templates need labelled summaries, but '{}' is unlabelled",
                s.source_id
            )));
        }
    }
    config.barycenter.validate()?;

    let distances = pairwise_distance_matrix(db, config.metric)?;
    let (dendrogram, partition) = match config.meta {
        MetaMethod::Hierarchical(linkage) => {
            let tree = hierarchical_cluster(&distances, linkage)?;
            let k = match config.groups {
                GroupCount::Fixed(k) => k,
                GroupCount::Auto => auto_group_count(&tree),
            };
            let partition = cut_tree(&tree, k)?;
            (Some(tree), partition)
        }
        MetaMethod::Hdbscan { min_cluster_size } => (None, density_cluster(&distances, min_cluster_size)?),
    };
    log::info!(
        "metaclustering produced {} groups ({} noise entries)",
        partition.n_groups(),
        partition.noise().len()
    );

    let templates = (0..partition.n_groups())
        .into_par_iter()
        .map(|g| {
            let members: Vec<CytometrySummary> = partition.members(g).into_iter().map(|i| db[i].clone()).collect();
            build_template(&members, g, config)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(TemplatesOutcome {
        distances,
        dendrogram,
        partition,
        templates,
    })
}

fn build_template(members: &[CytometrySummary], g: usize, config: &TemplateConfig) -> Result<Template> {
    if members.len() == 1 {
        let lone = &members[0];
        let summary = if config.template == TemplateMethod::Pooling {
            lone.clone()
        } else {
            lone.without_labels()
        };
        return Template::new(g, summary.into_clusters());
    }
    let opts = &config.barycenter;
    match config.template {
        TemplateMethod::Pooling => template_pooling(members, g, opts),
        TemplateMethod::Density { min_cluster_size } => template_density(members, g, min_cluster_size, opts),
        TemplateMethod::KBarycenter { k } => template_kbarycenter(members, g, k, opts),
    }
}
