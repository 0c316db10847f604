//! Agreement between two labellings of the same events.
//!
//! Precision and recall follow the conventions `R(∅, ·) = P(·, ∅) = 1` and
//! `R(·, ∅) = P(∅, ·) = 0`. When both sets are empty the two conventions
//! collide; that pair is scored `(1, 1, 1)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::Classifier;
use crate::model::LabeledEvents;

/// Precision, recall and their harmonic mean for one pair of clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl Prf {
    fn from_counts(gt: usize, pred: usize, overlap: usize) -> Self {
        if gt == 0 && pred == 0 {
            return Prf {
                precision: 1.0,
                recall: 1.0,
                f: 1.0,
            };
        }
        let recall = if gt == 0 { 1.0 } else { overlap as f64 / gt as f64 };
        let precision = if pred == 0 { 1.0 } else { overlap as f64 / pred as f64 };
        let recall = if pred == 0 { 0.0 } else { recall };
        let precision = if gt == 0 { 0.0 } else { precision };
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f }
    }
}

/// Scores a predicted cluster against a ground-truth cluster, both given as event indices.
pub fn cluster_prf(gt_cluster: &[usize], pred_cluster: &[usize]) -> Prf {
    let gt: BTreeSet<usize> = gt_cluster.iter().copied().collect();
    let pred: BTreeSet<usize> = pred_cluster.iter().copied().collect();
    Prf::from_counts(gt.len(), pred.len(), gt.intersection(&pred).count())
}

/// Cluster sizes and pairwise overlaps of two labellings.
struct Contingency<'a> {
    gt: BTreeMap<&'a str, usize>,
    pred: BTreeMap<&'a str, usize>,
    overlap: BTreeMap<(&'a str, &'a str), usize>,
    m: usize,
}

impl<'a> Contingency<'a> {
    fn new<S: AsRef<str>>(gt: &'a [S], pred: &'a [S]) -> Result<Self> {
        if gt.len() != pred.len() {
            return Err(Error::DimensionMismatch {
                expected: gt.len(),
                found: pred.len(),
            });
        }
        if gt.is_empty() {
            return Err(Error::invalid("cannot score an empty labelling"));
        }
        let mut c = Contingency {
            gt: BTreeMap::new(),
            pred: BTreeMap::new(),
            overlap: BTreeMap::new(),
            m: gt.len(),
        };
        for (g, p) in gt.iter().zip(pred) {
            let (g, p) = (g.as_ref(), p.as_ref());
            *c.gt.entry(g).or_default() += 1;
            *c.pred.entry(p).or_default() += 1;
            *c.overlap.entry((g, p)).or_default() += 1;
        }
        Ok(c)
    }

    fn prf(&self, g: &str, p: &str) -> Prf {
        Prf::from_counts(
            self.gt.get(g).copied().unwrap_or(0),
            self.pred.get(p).copied().unwrap_or(0),
            self.overlap.get(&(g, p)).copied().unwrap_or(0),
        )
    }
}

/// `Σ_k (|gt_k| / M) · max_l F(gt_k, pred_l)`.
pub fn f_measure<S: AsRef<str>>(gt: &[S], pred: &[S]) -> Result<f64> {
    let c = Contingency::new(gt, pred)?;
    let weighted: f64 = c
        .gt
        .iter()
        .map(|(g, size)| {
            let best = c.pred.keys().map(|p| c.prf(g, p).f).fold(0.0, f64::max);
            *size as f64 * best
        })
        .sum();
    Ok(weighted / c.m as f64)
}

/// Median of the values; the mean of the two middle ones for an even count.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

/// Median of the same-label F values, padded with one zero per label present on only one side.
pub fn median_f_measure<S: AsRef<str>>(gt: &[S], pred: &[S]) -> Result<f64> {
    let c = Contingency::new(gt, pred)?;
    Ok(median(&same_label_scores(&c)).expect("a nonempty labelling has a label"))
}

fn same_label_scores(c: &Contingency<'_>) -> Vec<f64> {
    let gt: BTreeSet<&str> = c.gt.keys().copied().collect();
    let pred: BTreeSet<&str> = c.pred.keys().copied().collect();
    let mut scores: Vec<f64> = gt.intersection(&pred).map(|l| c.prf(l, l).f).collect();
    scores.extend(std::iter::repeat_n(0.0, gt.symmetric_difference(&pred).count()));
    scores
}

/// Scores of one label, computed between the same-label clusters of both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub gt_size: usize,
    pub pred_size: usize,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub events: usize,
    pub f_measure: f64,
    pub median_f_measure: f64,
    /// Every label seen on either side, sorted.
    pub per_label: Vec<LabelScore>,
}

/// All agreement scores between a ground truth and a prediction.
pub fn metric_report<S: AsRef<str>>(gt: &[S], pred: &[S]) -> Result<MetricReport> {
    let c = Contingency::new(gt, pred)?;
    let labels: BTreeSet<&str> = c.gt.keys().chain(c.pred.keys()).copied().collect();
    let per_label = labels
        .into_iter()
        .map(|l| {
            let prf = c.prf(l, l);
            LabelScore {
                label: l.to_string(),
                gt_size: c.gt.get(l).copied().unwrap_or(0),
                pred_size: c.pred.get(l).copied().unwrap_or(0),
                precision: prf.precision,
                recall: prf.recall,
                f: prf.f,
            }
        })
        .collect();
    Ok(MetricReport {
        events: c.m,
        f_measure: f_measure(gt, pred)?,
        median_f_measure: median(&same_label_scores(&c)).expect("a nonempty labelling has a label"),
        per_label,
    })
}

/// Which F statistic a learning distance is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearningVariant {
    Overall,
    Median,
}

/// `1 − (F(y, ŷ) + F(x, x̂)) / 2`, with `ŷ` predicted by a classifier trained on
/// `x` and `x̂` by one trained on `y`.
pub fn learning_distance(
    x: &LabeledEvents,
    y: &LabeledEvents,
    classifier: &dyn Classifier,
    variant: LearningVariant,
) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    let (x_labels, y_labels) = match (x.labels(), y.labels()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::invalid("learning distance needs labelled events on both sides")),
    };
    let (y_hat, x_hat) = rayon::join(
        || classifier.fit_predict(x, y.events()),
        || classifier.fit_predict(y, x.events()),
    );
    let (y_hat, x_hat) = (y_hat?, x_hat?);
    let score = |gt: &[String], pred: &[String]| match variant {
        LearningVariant::Overall => f_measure(gt, pred),
        LearningVariant::Median => median_f_measure(gt, pred),
    };
    let fy = score(y_labels, &y_hat)?;
    let fx = score(x_labels, &x_hat)?;
    Ok((1.0 - (fy + fx) / 2.0).clamp(0.0, 1.0))
}
