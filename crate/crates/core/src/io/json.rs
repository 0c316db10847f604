use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterModel, CytometrySummary};
use crate::partition::PartitionMetric;
use crate::templates::{Dendrogram, Merge, MetaPartition, Template};
use crate::transport::SpdMatrix;

use super::write_atomic;

/// Version written into, and required from, every JSON document.
pub const FORMAT_VERSION: u32 = 1;

const SUMMARY_FORMAT: &str = "otgate-summary";
const TEMPLATES_FORMAT: &str = "otgate-templates";
const DENDROGRAM_FORMAT: &str = "otgate-dendrogram";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterDoc {
    label: Option<String>,
    weight: f64,
    mean: Vec<f64>,
    /// Row-major rows.
    cov: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryDoc {
    source_id: String,
    clusters: Vec<ClusterDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MergeDoc {
    left: usize,
    right: usize,
    height: f64,
    size: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DendrogramDoc {
    leaves: Vec<String>,
    merges: Vec<MergeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionDoc {
    ids: Vec<String>,
    /// Group of each id, `null` for noise.
    groups: Vec<Option<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateDoc {
    group: usize,
    summary: SummaryDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleDoc {
    metric: String,
    database: Vec<SummaryDoc>,
    partition: PartitionDoc,
    templates: Vec<TemplateDoc>,
    dendrogram: Option<DendrogramDoc>,
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: T,
}

fn schema(message: impl Into<String>) -> Error {
    Error::Schema {
        version: FORMAT_VERSION,
        message: message.into(),
    }
}

fn encode<T: Serialize>(format: &str, body: T) -> String {
    let env = Envelope {
        format: format.to_string(),
        version: FORMAT_VERSION,
        body,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("documents serialize");
    s.push('\n');
    s
}

fn decode<T: DeserializeOwned>(format: &str, text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema(format!("malformed JSON: {e}")))?;
    let found = value.get("format").and_then(|v| v.as_str());
    if found != Some(format) {
        return Err(schema(format!("expected format '{format}', found {found:?}")));
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(schema(format!("unsupported version {v}"))),
        None => return Err(schema("missing version")),
    }
    let env: Envelope<T> = serde_json::from_value(value).map_err(|e| schema(e.to_string()))?;
    Ok(env.body)
}

fn summary_doc(s: &CytometrySummary) -> SummaryDoc {
    SummaryDoc {
        source_id: s.source_id.clone(),
        clusters: s
            .clusters()
            .iter()
            .map(|c| {
                let cov = c.cov.as_matrix();
                ClusterDoc {
                    label: c.label.clone(),
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    cov: (0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect()).collect(),
                }
            })
            .collect(),
    }
}

fn summary_from_doc(doc: SummaryDoc) -> Result<CytometrySummary> {
    let id = doc.source_id;
    let clusters = doc
        .clusters
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let d = c.mean.len();
            if c.cov.len() != d || c.cov.iter().any(|r| r.len() != d) {
                return Err(schema(format!("'{id}' cluster {k}: covariance is not {d}x{d}")));
            }
            let cov = DMatrix::from_row_iterator(d, d, c.cov.into_iter().flatten());
            let cov = SpdMatrix::new(cov).map_err(|e| schema(format!("'{id}' cluster {k}: {e}")))?;
            ClusterModel::new(DVector::from_vec(c.mean), cov, c.weight, c.label)
                .map_err(|e| schema(format!("'{id}' cluster {k}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    CytometrySummary::new(id.clone(), clusters).map_err(|e| schema(format!("'{id}': {e}")))
}

fn dendrogram_doc(t: &Dendrogram) -> DendrogramDoc {
    DendrogramDoc {
        leaves: t.leaves().to_vec(),
        merges: t
            .merges()
            .iter()
            .map(|m| MergeDoc {
                left: m.left,
                right: m.right,
                height: m.height,
                size: m.size,
            })
            .collect(),
    }
}

fn dendrogram_from_doc(doc: DendrogramDoc) -> Result<Dendrogram> {
    let merges = doc
        .merges
        .into_iter()
        .map(|m| Merge {
            left: m.left,
            right: m.right,
            height: m.height,
            size: m.size,
        })
        .collect();
    Dendrogram::new(doc.leaves, merges).map_err(|e| schema(e.to_string()))
}

pub fn summary_to_json(s: &CytometrySummary) -> String {
    encode(SUMMARY_FORMAT, summary_doc(s))
}

pub fn read_summary(text: &str) -> Result<CytometrySummary> {
    summary_from_doc(decode(SUMMARY_FORMAT, text)?)
}

/// Saves a summary. Event supports are not stored.
pub fn save_summary(s: &CytometrySummary, path: &Path) -> Result<()> {
    write_atomic(path, summary_to_json(s).as_bytes())
}

pub fn load_summary(path: &Path) -> Result<CytometrySummary> {
    read_summary(&std::fs::read_to_string(path)?)
}

pub fn dendrogram_to_json(t: &Dendrogram) -> String {
    encode(DENDROGRAM_FORMAT, dendrogram_doc(t))
}

pub fn dendrogram_from_json(text: &str) -> Result<Dendrogram> {
    dendrogram_from_doc(decode(DENDROGRAM_FORMAT, text)?)
}

/// Everything classification needs: the database, its grouping and the templates.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBundle {
    /// Partition distance the grouping was built with.
    pub metric: PartitionMetric,
    pub database: Vec<CytometrySummary>,
    pub partition: MetaPartition,
    pub templates: Vec<Template>,
    pub dendrogram: Option<Dendrogram>,
}

pub fn templates_to_json(b: &TemplateBundle) -> String {
    encode(
        TEMPLATES_FORMAT,
        BundleDoc {
            metric: b.metric.to_string(),
            database: b.database.iter().map(summary_doc).collect(),
            partition: PartitionDoc {
                ids: b.partition.ids().to_vec(),
                groups: b.partition.assignment().to_vec(),
            },
            templates: b
                .templates
                .iter()
                .map(|t| TemplateDoc {
                    group: t.group,
                    summary: summary_doc(&t.summary),
                })
                .collect(),
            dendrogram: b.dendrogram.as_ref().map(dendrogram_doc),
        },
    )
}

pub fn read_templates(text: &str) -> Result<TemplateBundle> {
    let doc: BundleDoc = decode(TEMPLATES_FORMAT, text)?;
    let metric = doc.metric.parse().map_err(|e: Error| schema(e.to_string()))?;
    let database = doc.database.into_iter().map(summary_from_doc).collect::<Result<Vec<_>>>()?;
    let partition =
        MetaPartition::new(doc.partition.ids, doc.partition.groups).map_err(|e| schema(e.to_string()))?;
    let templates = doc
        .templates
        .into_iter()
        .map(|t| {
            if t.group >= partition.n_groups() {
                return Err(schema(format!("template for unknown group {}", t.group)));
            }
            Ok(Template {
                group: t.group,
                summary: summary_from_doc(t.summary)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dendrogram = doc.dendrogram.map(dendrogram_from_doc).transpose()?;
    Ok(TemplateBundle {
        metric,
        database,
        partition,
        templates,
        dendrogram,
    })
}

pub fn save_templates(b: &TemplateBundle, path: &Path) -> Result<()> {
    write_atomic(path, templates_to_json(b).as_bytes())
}

pub fn load_templates(path: &Path) -> Result<TemplateBundle> {
    read_templates(&std::fs::read_to_string(path)?)
}
