//! Case manifests: a JSON file listing channel images and an optional label.
//!
//! Paths inside a manifest are resolved relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::document::{read_document, Versioned};
use super::{read_label_volume, read_volume, Case};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub path: String,
    pub modality: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseManifest {
    pub schema_version: u64,
    pub id: String,
    pub channels: Vec<ChannelEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Optional grouping key (e.g. patient id) for cross-validation splits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl Versioned for CaseManifest {
    const SCHEMA_VERSION: u64 = 1;
}

impl CaseManifest {
    pub fn new(id: impl Into<String>, channels: Vec<ChannelEntry>, label: Option<String>) -> Self {
        Self { schema_version: Self::SCHEMA_VERSION, id: id.into(), channels, label, group: None }
    }
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Load a case and validate that all channels and the label share one geometry.
pub fn read_case(manifest: &Path) -> Result<Case> {
    let m: CaseManifest = read_document(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    if m.channels.is_empty() {
        return Err(Error::MissingChannel(format!("{}: manifest lists no channels", manifest.display())));
    }
    let mut channels = Vec::with_capacity(m.channels.len());
    for entry in &m.channels {
        let p = resolve(base, &entry.path);
        if !p.exists() {
            return Err(Error::MissingChannel(format!("{}: {} not found", m.id, p.display())));
        }
        channels.push(read_volume(&p, &entry.modality)?);
    }
    let label = match &m.label {
        Some(rel) => Some(read_label_volume(&resolve(base, rel))?),
        None => None,
    };
    Case::new(m.id, channels, label)
}

pub fn write_case_manifest(manifest: &CaseManifest, path: &Path) -> Result<()> {
    super::write_document(manifest, path)
}
