use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{ClusterModel, CytometrySummary};
use crate::partition::DistanceMatrix;
use crate::transport::gaussian_w2;

use super::barycenter::{gaussian_barycenter, BarycenterOptions};
use super::hdbscan::density_cluster;
use super::kbarycenter::k_barycenter;

/// Prototype cytometry of one metaclustering group.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub group: usize,
    pub summary: CytometrySummary,
}

impl Template {
    pub fn new(group: usize, clusters: Vec<ClusterModel>) -> Result<Self> {
        Ok(Self {
            group,
            summary: CytometrySummary::renormalized(template_id(group), clusters)?,
        })
    }

    pub fn is_labeled(&self) -> bool {
        self.summary.is_labeled()
    }
}

pub fn template_id(group: usize) -> String {
    format!("template-{group}")
}

fn sorted_members(group: &[CytometrySummary]) -> Result<Vec<&CytometrySummary>> {
    let Some(first) = group.first() else {
        return Err(Error::invalid("template of an empty group"));
    };
    for s in group {
        first.check_same_dim(s)?;
    }
    let mut members: Vec<&CytometrySummary> = group.iter().collect();
    members.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    Ok(members)
}

/// Every cluster of the group with mass `weight / |group|`.
fn pooled(members: &[&CytometrySummary]) -> Vec<ClusterModel> {
    let share = 1.0 / members.len() as f64;
    members
        .iter()
        .flat_map(|s| s.clusters().iter().map(move |c| c.clone().with_weight(c.weight * share)))
        .collect()
}

fn barycenter_of(clusters: &[ClusterModel], opts: &BarycenterOptions) -> Result<ClusterModel> {
    let mass: f64 = clusters.iter().map(|c| c.weight).sum();
    let lambdas: Vec<f64> = clusters.iter().map(|c| c.weight / mass).collect();
    Ok(gaussian_barycenter(clusters, &lambdas, opts)?.model.with_weight(mass))
}

/// One barycenter per label across a labelled group.
///
/// The barycenter of label `L` weights each member cluster by its own
/// weight, and carries the mean weight of `L` across the group members.
pub fn template_pooling(group: &[CytometrySummary], group_id: usize, opts: &BarycenterOptions) -> Result<Template> {
    let members = sorted_members(group)?;
    if let Some(s) = members.iter().find(|s| !s.is_labeled()) {
        return Err(Error::Configuration(format!(
            "pooling needs labelled clusters, but '{}' has unlabelled ones",
            s.source_id
        )));
    }
    if members.len() == 1 {
        return Template::new(group_id, members[0].clusters().to_vec());
    }
    let mut by_label: BTreeMap<String, Vec<ClusterModel>> = BTreeMap::new();
    for c in pooled(&members) {
        let label = c.label.clone().expect("labels checked above");
        by_label.entry(label).or_default().push(c);
    }
    let clusters = by_label
        .values()
        .map(|cs| barycenter_of(cs, opts))
        .collect::<Result<Vec<_>>>()?;
    Template::new(group_id, clusters)
}

/// HDBSCAN over the pooled clusters in `W₂`, one barycenter per density group.
///
/// Identical Gaussians are pooled as one point carrying their summed mass.
pub fn template_density(
    group: &[CytometrySummary],
    group_id: usize,
    min_cluster_size: usize,
    opts: &BarycenterOptions,
) -> Result<Template> {
    let members = sorted_members(group)?;
    let mut pool: Vec<ClusterModel> = Vec::new();
    for c in pooled(&members) {
        match pool.iter_mut().find(|p| p.same_gaussian(&c)) {
            Some(p) => p.weight += c.weight,
            None => pool.push(c.with_label(None)),
        }
    }
    let ids: Vec<String> = (0..pool.len()).map(|i| i.to_string()).collect();
    let mut failure = None;
    let dm = DistanceMatrix::from_fn(ids, |i, j| {
        gaussian_w2(&pool[i], &pool[j]).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            0.0
        })
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let partition = density_cluster(&dm, min_cluster_size)?;
    if partition.n_groups() == 0 {
        return Err(Error::EmptyTemplate);
    }
    let clusters = (0..partition.n_groups())
        .map(|g| {
            let members: Vec<ClusterModel> = partition.members(g).into_iter().map(|i| pool[i].clone()).collect();
            barycenter_of(&members, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Template::new(group_id, clusters)
}

/// k-barycenter of the pooled clusters; template weights are the assigned masses.
pub fn template_kbarycenter(
    group: &[CytometrySummary],
    group_id: usize,
    k: usize,
    opts: &BarycenterOptions,
) -> Result<Template> {
    let members = sorted_members(group)?;
    let pool: Vec<ClusterModel> = pooled(&members).into_iter().map(|c| c.with_label(None)).collect();
    let fit = k_barycenter(&pool, k, opts)?;
    let clusters: Vec<ClusterModel> = fit
        .centers
        .into_iter()
        .enumerate()
        .filter(|(j, _)| fit.assignment.contains(&Some(*j)))
        .map(|(_, c)| c)
        .collect();
    Template::new(group_id, clusters)
}
