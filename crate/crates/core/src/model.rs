//! Cytometry data and its Gaussian summaries.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::transport::{DiscreteMeasure, SpdMatrix, MASS_TOL};

/// Raw events: an `n × d` marker matrix with optional per-event labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEvents {
    markers: Vec<String>,
    events: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

impl LabeledEvents {
    pub fn new(events: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        Self::with_markers(default_markers(events.ncols()), events, Some(labels))
    }

    pub fn unlabeled(events: DMatrix<f64>) -> Result<Self> {
        Self::with_markers(default_markers(events.ncols()), events, None)
    }

    pub fn with_markers(
        markers: Vec<String>,
        events: DMatrix<f64>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if events.nrows() == 0 || events.ncols() == 0 {
            return Err(Error::invalid(format!(
                "events matrix is {}x{}, expected at least 1x1",
                events.nrows(),
                events.ncols()
            )));
        }
        if markers.len() != events.ncols() {
            return Err(Error::DimensionMismatch {
                expected: events.ncols(),
                found: markers.len(),
            });
        }
        if let Some(labels) = &labels {
            if labels.len() != events.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: events.nrows(),
                    found: labels.len(),
                });
            }
            if let Some(row) = labels.iter().position(|l| l.is_empty()) {
                return Err(Error::invalid(format!("event {row} has an empty label")));
            }
        }
        Ok(Self {
            markers,
            events,
            labels,
        })
    }

    pub fn events(&self) -> &DMatrix<f64> {
        &self.events
    }

    pub fn markers(&self) -> &[String] {
        &self.markers
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn len(&self) -> usize {
        self.events.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.events.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.events.ncols()
    }

    /// Same events, new labels.
    pub fn relabeled(&self, labels: Vec<String>) -> Result<Self> {
        Self::with_markers(self.markers.clone(), self.events.clone(), Some(labels))
    }
}

fn default_markers(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("m{i}")).collect()
}

/// One gated population viewed as a Gaussian: mean, covariance, weight and
/// an optional cell-type label.
///
/// `support` optionally keeps (a subsample of) the member events, which the
/// empirical cluster distance needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
    pub weight: f64,
    pub label: Option<String>,
    pub support: Option<Arc<DMatrix<f64>>>,
}

impl ClusterModel {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix, weight: f64, label: Option<String>) -> Result<Self> {
        if cov.dim() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: cov.dim(),
            });
        }
        if !(weight > 0.0 && weight <= 1.0 + MASS_TOL) {
            return Err(Error::invalid(format!("cluster weight {weight} outside (0, 1]")));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cluster mean has non-finite entries"));
        }
        Ok(Self {
            mean,
            cov,
            weight: weight.min(1.0),
            label,
            support: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn with_support(mut self, events: DMatrix<f64>) -> Result<Self> {
        if events.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: events.ncols(),
            });
        }
        self.support = Some(Arc::new(events));
        Ok(self)
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    /// Same Gaussian parameters (mean and covariance).
    pub fn same_gaussian(&self, other: &ClusterModel) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

/// A gated cytometry reduced to a weighted list of cluster models.
#[derive(Debug, Clone, PartialEq)]
pub struct CytometrySummary {
    pub source_id: String,
    clusters: Vec<ClusterModel>,
}

impl CytometrySummary {
    pub fn new(source_id: impl Into<String>, clusters: Vec<ClusterModel>) -> Result<Self> {
        let Some(first) = clusters.first() else {
            return Err(Error::invalid("summary has no clusters"));
        };
        let d = first.dim();
        if let Some(c) = clusters.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: c.dim(),
            });
        }
        let total: f64 = clusters.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!(
                "cluster weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            source_id: source_id.into(),
            clusters,
        })
    }

    /// Builds a summary after rescaling the cluster weights to sum to one.
    pub fn renormalized(source_id: impl Into<String>, mut clusters: Vec<ClusterModel>) -> Result<Self> {
        let total: f64 = clusters.iter().map(|c| c.weight).sum();
        if !(total > 0.0) {
            return Err(Error::invalid("cluster weights must have positive sum"));
        }
        for c in &mut clusters {
            c.weight /= total;
        }
        Self::new(source_id, clusters)
    }

    pub fn clusters(&self) -> &[ClusterModel] {
        &self.clusters
    }

    pub fn into_clusters(self) -> Vec<ClusterModel> {
        self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.clusters[0].dim()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.weight).collect()
    }

    pub fn measure(&self) -> DiscreteMeasure {
        DiscreteMeasure::normalized(&self.weights()).expect("summary weights are validated")
    }

    /// True when every cluster carries a label.
    pub fn is_labeled(&self) -> bool {
        self.clusters.iter().all(|c| c.label.is_some())
    }

    pub fn labels(&self) -> Vec<Option<&str>> {
        self.clusters.iter().map(|c| c.label.as_deref()).collect()
    }

    pub fn check_same_dim(&self, other: &CytometrySummary) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// Drops labels and event support, keeping the Gaussian parameters.
    pub fn without_labels(&self) -> Self {
        Self {
            source_id: self.source_id.clone(),
            clusters: self
                .clusters
                .iter()
                .map(|c| ClusterModel {
                    label: None,
                    ..c.clone()
                })
                .collect(),
        }
    }
}
