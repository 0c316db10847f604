use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::{CytometrySummary, LabeledEvents};
use crate::partition::{default_min_cluster_size, summarize_cytometry};

/// Quadratic discriminant built from a labelled summary.
#[derive(Debug, Clone)]
pub struct QdaModel {
    classes: Vec<QdaClass>,
}

#[derive(Debug, Clone)]
struct QdaClass {
    label: String,
    /// `log p − ½ log det S`
    constant: f64,
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl QdaModel {
    pub fn labels(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.label.as_str()).collect()
    }

    pub fn dim(&self) -> usize {
        self.classes[0].mean.len()
    }

    /// Discriminant `log p_j − ½ log det S_j − ½ (x − m_j)ᵀ S_j⁻¹ (x − m_j)` of every class.
    pub fn discriminants(&self, x: &DVector<f64>) -> Vec<f64> {
        self.classes
            .iter()
            .map(|c| {
                let diff = x - &c.mean;
                let z = c.chol.l_dirty().solve_lower_triangular(&diff).expect("triangular factor is invertible");
                c.constant - 0.5 * z.norm_squared()
            })
            .collect()
    }
}

/// Fits QDA with one class per labelled cluster of `summary`.
pub fn qda_fit(summary: &CytometrySummary) -> Result<QdaModel> {
    let classes = summary
        .clusters()
        .iter()
        .map(|c| {
            let label = c
                .label
                .clone()
                .ok_or_else(|| Error::invalid(format!("QDA needs labelled clusters; '{}' has none", summary.source_id)))?;
            let chol = Cholesky::new(c.cov.as_matrix().clone())
                .ok_or_else(|| Error::invalid(format!("covariance of class '{label}' is singular")))?;
            let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            Ok(QdaClass {
                label,
                constant: c.weight.ln() - 0.5 * log_det,
                mean: c.mean.clone(),
                chol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QdaModel { classes })
}

/// Label of the largest discriminant for every row, ties to the first class.
pub fn qda_predict(model: &QdaModel, events: &DMatrix<f64>) -> Result<Vec<String>> {
    if events.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: events.ncols(),
        });
    }
    Ok((0..events.nrows())
        .map(|i| {
            let scores = model.discriminants(&events.row(i).transpose());
            let mut best = 0;
            for (j, s) in scores.iter().enumerate() {
                if *s > scores[best] {
                    best = j;
                }
            }
            model.classes[best].label.clone()
        })
        .collect())
}

/// A supervised classifier: trains on labelled events, labels new ones.
pub trait Classifier: Sync {
    fn fit_predict(&self, train: &LabeledEvents, test: &DMatrix<f64>) -> Result<Vec<String>>;
}

/// QDA on the per-label Gaussian summary of the training events.
#[derive(Debug, Clone, Copy, Default)]
pub struct QdaClassifier {
    /// Smallest class kept; defaults to `d + 2`.
    pub min_cluster_size: Option<usize>,
}

impl Classifier for QdaClassifier {
    fn fit_predict(&self, train: &LabeledEvents, test: &DMatrix<f64>) -> Result<Vec<String>> {
        let min = self.min_cluster_size.unwrap_or_else(|| default_min_cluster_size(train.dim()));
        let summary = summarize_cytometry("train", train, min, false)?;
        qda_predict(&qda_fit(&summary)?, test)
    }
}
