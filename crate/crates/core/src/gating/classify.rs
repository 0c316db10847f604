use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{CytometrySummary, LabeledEvents};
use crate::partition::{similarity_distance, summarize_cytometry, ClusterMetric};
use crate::templates::{MetaPartition, Template};

use super::qda::{qda_fit, qda_predict};
use super::relabel::{fuzzy_relabel, hungarian_relabel, UNMATCHED};
use super::tclust::{best_template_init, TclustParams};

/// How the events are finally labelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelMethod {
    /// QDA from the assigned template.
    QdaTemplate,
    /// QDA from the database entry of the assigned group closest to the event clustering.
    QdaNearest,
    LabelTransferHungarian,
    LabelTransferFuzzy,
}

impl LabelMethod {
    pub const ALL: [LabelMethod; 4] = [
        LabelMethod::QdaTemplate,
        LabelMethod::QdaNearest,
        LabelMethod::LabelTransferHungarian,
        LabelMethod::LabelTransferFuzzy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LabelMethod::QdaTemplate => "qda-template",
            LabelMethod::QdaNearest => "qda-nearest",
            LabelMethod::LabelTransferHungarian => "label-transfer-hungarian",
            LabelMethod::LabelTransferFuzzy => "label-transfer-fuzzy",
        }
    }
}

impl fmt::Display for LabelMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LabelMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown labelling method '{s}'")))
    }
}

/// Where the unsupervised clustering of the new sample comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ClusteringSource {
    /// tclust initialized from every template, best objective kept.
    TclustTemplates(TclustParams),
    /// A given cluster id per event.
    External(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationConfig {
    pub method: LabelMethod,
    pub clustering: ClusteringSource,
    /// Cluster distance used by the similarity distance and the relabelling.
    pub metric: ClusterMetric,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            method: LabelMethod::QdaTemplate,
            clustering: ClusteringSource::TclustTemplates(TclustParams::default()),
            metric: ClusterMetric::default(),
        }
    }
}

/// Templates together with the database and grouping they came from.
#[derive(Debug, Clone, Copy)]
pub struct TemplateDatabase<'a> {
    pub db: &'a [CytometrySummary],
    pub partition: &'a MetaPartition,
    pub templates: &'a [Template],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub labels: Vec<String>,
    /// Unsupervised clustering of the sample.
    pub clustering: CytometrySummary,
    /// Cluster of every event in `clustering`, when it has one.
    pub event_cluster: Vec<Option<usize>>,
    /// Group of the template closest to the clustering.
    pub group: usize,
    /// Database entry used by [`LabelMethod::QdaNearest`].
    pub nearest_entry: Option<String>,
}

/// Clustering of the sample and the cluster of each event, shared by every labelling method.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleClustering {
    pub summary: CytometrySummary,
    pub event_cluster: Vec<Option<usize>>,
}

pub fn cluster_sample(events: &DMatrix<f64>, templates: &[Template], source: &ClusteringSource) -> Result<SampleClustering> {
    match source {
        ClusteringSource::TclustTemplates(params) => {
            let (fit, winner) = best_template_init(events, templates, params)?;
            log::info!(
                "tclust initialized from template {} wins (objective {:.6e})",
                templates[winner].group,
                fit.objective
            );
            Ok(SampleClustering {
                summary: fit.summary("sample")?,
                event_cluster: fit.best_cluster.iter().map(|&j| Some(j)).collect(),
            })
        }
        ClusteringSource::External(ids) => {
            let x = LabeledEvents::new(events.clone(), ids.clone())?;
            let summary = summarize_cytometry("sample", &x, x.dim() + 1, false)?;
            let names: Vec<&str> = summary.labels().into_iter().map(|l| l.expect("summaries carry labels")).collect();
            let event_cluster = ids.iter().map(|id| names.iter().position(|n| n == id)).collect();
            Ok(SampleClustering {
                summary: summary.without_labels(),
                event_cluster,
            })
        }
    }
}

/// Index of the template closest to `u` in similarity distance, ties to the lowest.
pub fn assign_to_template(u: &CytometrySummary, templates: &[Template], metric: ClusterMetric) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in templates.iter().enumerate() {
        let d = similarity_distance(u, &t.summary, metric)?.value;
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::invalid("no templates to assign to"))
}

/// Gates a new sample with a template database.
///
/// The sample is clustered (tclust from the templates, or a given
/// partition), matched to the closest template in similarity distance, and
/// labelled by the chosen method.
pub fn optimal_flow_classification(
    events: &DMatrix<f64>,
    database: TemplateDatabase<'_>,
    config: &ClassificationConfig,
) -> Result<Classification> {
    let sample = cluster_sample(events, database.templates, &config.clustering)?;
    label_sample(events, &sample, database, config.method, config.metric)
}

/// Labelling step of [`optimal_flow_classification`] for an already clustered sample.
pub fn label_sample(
    events: &DMatrix<f64>,
    sample: &SampleClustering,
    database: TemplateDatabase<'_>,
    method: LabelMethod,
    metric: ClusterMetric,
) -> Result<Classification> {
    let templates = database.templates;
    let index = assign_to_template(&sample.summary, templates, metric)?;
    let template = &templates[index];
    let needs_labels = |what: &str| {
        Error::Configuration(format!(
            "{method} needs a labelled {what}, but template {} has unlabelled clusters (build templates with pooling)",
            template.group
        ))
    };

    let mut nearest_entry = None;
    let labels = match method {
        LabelMethod::QdaTemplate => {
            if !template.is_labeled() {
                return Err(needs_labels("template"));
            }
            qda_predict(&qda_fit(&template.summary)?, events)?
        }
        LabelMethod::QdaNearest => {
            let entry = nearest_member(&sample.summary, template.group, database, metric)?;
            if !entry.is_labeled() {
                return Err(Error::Configuration(format!(
                    "{method} needs labelled database entries, but '{}' is unlabelled",
                    entry.source_id
                )));
            }
            nearest_entry = Some(entry.source_id.clone());
            qda_predict(&qda_fit(entry)?, events)?
        }
        LabelMethod::LabelTransferHungarian | LabelMethod::LabelTransferFuzzy => {
            if !template.is_labeled() {
                return Err(needs_labels("template"));
            }
            let cluster_labels = if method == LabelMethod::LabelTransferHungarian {
                hungarian_relabel(&sample.summary, &template.summary, metric)?.labels
            } else {
                fuzzy_relabel(&sample.summary, &template.summary, metric)?.hard_labels()
            };
            sample
                .event_cluster
                .iter()
                .map(|c| match c {
                    Some(c) => cluster_labels[*c].clone(),
                    None => UNMATCHED.to_string(),
                })
                .collect()
        }
    };
    Ok(Classification {
        labels,
        clustering: sample.summary.clone(),
        event_cluster: sample.event_cluster.clone(),
        group: template.group,
        nearest_entry,
    })
}

fn nearest_member<'a>(
    u: &CytometrySummary,
    group: usize,
    database: TemplateDatabase<'a>,
    metric: ClusterMetric,
) -> Result<&'a CytometrySummary> {
    let mut best: Option<(&CytometrySummary, f64)> = None;
    for i in database.partition.members(group) {
        let id = &database.partition.ids()[i];
        let entry = database
            .db
            .iter()
            .find(|s| &s.source_id == id)
            .ok_or_else(|| Error::invalid(format!("database has no entry '{id}'")))?;
        let d = similarity_distance(u, entry, metric)?.value;
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((entry, d));
        }
    }
    best.map(|(s, _)| s)
        .ok_or_else(|| Error::invalid(format!("group {group} has no members")))
}
