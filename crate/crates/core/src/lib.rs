//! # otgate
//!
//! Optimal-transport tools for gated cytometry data.
//!
//! A gated cytometry is reduced to a weighted list of Gaussian cluster models
//! (a [`CytometrySummary`]). Summaries are compared with the similarity
//! distance (optimal transport cost over independent-coupling cost), grouped
//! by hierarchical or density-based clustering, and each group is condensed
//! into a template built from Wasserstein barycenters. New samples are gated
//! with trimmed model-based clustering seeded from the templates, matched to
//! the closest template, and labelled by QDA or label transfer.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`transport`] | exact discrete OT, Sinkhorn, Gaussian W2, SPD utilities |
//! | [`partition`] | summaries, cluster and partition distances |
//! | [`templates`] | dendrograms, HDBSCAN, barycenters, template formation |
//! | [`gating`] | tclust, QDA, Hungarian and fuzzy relabelling, classification |
//! | [`evaluation`] | F-measure, median F-measure, learning distances |
//! | [`io`] | CSV and JSON formats, Newick export |
//! | [`synthetic`] | planted synthetic cytometry databases |

pub mod error;
pub mod evaluation;
pub mod gating;
pub mod io;
pub mod model;
pub mod partition;
pub mod synthetic;
pub mod templates;
pub mod transport;

pub use error::{Error, Result};
pub use model::{ClusterModel, CytometrySummary, LabeledEvents};
pub use transport::SpdMatrix;
