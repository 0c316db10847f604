//! Gating a new sample against a template database.

mod classify;
mod qda;
mod relabel;
mod tclust;

pub use classify::{
    assign_to_template, cluster_sample, label_sample, optimal_flow_classification, Classification,
    ClassificationConfig, ClusteringSource, LabelMethod, SampleClustering, TemplateDatabase,
};
pub use qda::{qda_fit, qda_predict, Classifier, QdaClassifier, QdaModel};
pub use relabel::{fuzzy_relabel, hungarian, hungarian_relabel, FuzzyRelabelling, HungarianRelabelling, UNMATCHED};
pub use tclust::{best_template_init, restrict_eigenvalues, tclust, TclustParams, TclustResult};
