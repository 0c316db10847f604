//! File formats: event CSVs, versioned JSON documents and Newick trees.
//!
//! Every writer goes through [`write_atomic`], so a failed write never
//! leaves a partial file behind.

mod events;
mod json;
mod manifest;
mod newick;

use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub use events::{load_csv, read_csv, write_csv, write_csv_to};
pub use json::{
    dendrogram_from_json, dendrogram_to_json, load_summary, load_templates, read_summary, read_templates,
    save_summary, save_templates, summary_to_json, templates_to_json, TemplateBundle, FORMAT_VERSION,
};
pub use manifest::{DatasetManifest, ManifestEntry, ManifestOptions, Role, TclustOptions};
pub use newick::to_newick;

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
///
/// A replaced file keeps its permissions; a new one gets the same mode as
/// `File::create` would give it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    let permissions = match std::fs::metadata(path) {
        Ok(meta) => Some(meta.permissions()),
        Err(_) => default_permissions(),
    };
    if let Some(p) = permissions {
        builder.permissions(p);
    }
    let mut tmp = builder.tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(unix)]
fn default_permissions() -> Option<std::fs::Permissions> {
    use std::os::unix::fs::PermissionsExt;
    // the process umask still applies at creation
    Some(std::fs::Permissions::from_mode(0o666))
}

#[cfg(not(unix))]
fn default_permissions() -> Option<std::fs::Permissions> {
    None
}
