use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::json::FORMAT_VERSION;
use super::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Database,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// CSV file, relative to the manifest's directory unless absolute.
    pub path: PathBuf,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TclustOptions {
    pub alpha: Option<f64>,
    pub restriction_c: Option<f64>,
    pub max_iter: Option<usize>,
    pub n_restarts: Option<usize>,
}

/// Pipeline settings; command-line flags take precedence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestOptions {
    pub equal_weights: bool,
    pub min_cluster_size: Option<usize>,
    pub metric: Option<String>,
    pub meta_method: Option<String>,
    pub template_method: Option<String>,
    /// Group count cut from the dendrogram; automatic when absent.
    pub k: Option<usize>,
    /// Clusters per template for k-barycenter templates.
    pub template_k: Option<usize>,
    /// Smallest group for density-based metaclustering or template formation.
    pub min_group_size: Option<usize>,
    pub tclust: TclustOptions,
    pub seed: Option<u64>,
}

/// The cytometries of an experiment and how to process them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    #[serde(default)]
    pub markers: Option<Vec<String>>,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub options: ManifestOptions,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self {
            version: FORMAT_VERSION,
            markers: None,
            entries,
            options: ManifestOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Schema {
                version: FORMAT_VERSION,
                message: format!("unsupported manifest version {}", self.version),
            });
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::invalid(format!("duplicate manifest id '{}'", e.id)));
            }
        }
        Ok(())
    }

    /// Reads a manifest and makes its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Schema {
            version: FORMAT_VERSION,
            message: format!("{}: {e}", path.display()),
        })?;
        m.validate()?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            if !e.path.is_file() {
                return Err(Error::invalid(format!("entry '{}': no file at {}", e.id, e.path.display())));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn entries_with(&self, role: Role) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }
}
