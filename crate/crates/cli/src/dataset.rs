//! Dataset directories: one `<id>.case.json` manifest per case.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use segplan_core::volume_io::{read_case, read_document, read_label_volume, Case, CaseManifest, LabelVolume};
use segplan_core::{Error, Result};

pub const MANIFEST_SUFFIX: &str = ".case.json";

/// Case manifests directly inside `dir`, sorted by file name.
pub fn discover_manifests(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_manifest = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(MANIFEST_SUFFIX));
        if is_manifest && path.is_file() {
            out.push(path);
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("no cases found"));
    }
    out.sort();
    Ok(out)
}

/// Load every case in `dir`, ordered by case id. Duplicate ids are rejected.
pub fn load_cases(dir: &Path) -> Result<Vec<Case>> {
    let manifests = discover_manifests(dir)?;
    let mut cases = manifests.par_iter().map(|p| read_case(p)).collect::<Result<Vec<_>>>()?;
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = cases.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::Invalid(format!("duplicate case id {}", w[0].id)));
    }
    Ok(cases)
}

/// Optional group keys declared in the manifests, keyed by case id.
pub fn manifest_groups(dir: &Path) -> Result<Vec<(String, Option<String>)>> {
    discover_manifests(dir)?.iter().map(|p| read_document::<CaseManifest>(p).map(|m| (m.id, m.group))).collect()
}

/// Every file a manifest depends on: the manifest, its channels and label,
/// plus the `.raw` payloads of native sidecars.
pub fn manifest_inputs(manifest: &Path) -> Result<Vec<PathBuf>> {
    let m: CaseManifest = read_document(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut files = vec![manifest.to_path_buf()];
    for rel in m.channels.iter().map(|c| c.path.as_str()).chain(m.label.as_deref()) {
        let p = base.join(rel);
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if !(name.ends_with(".nii") || name.ends_with(".nii.gz")) {
            files.push(p.with_extension("raw"));
        }
        files.push(p);
    }
    Ok(files)
}

/// Prediction label maps in `dir`, one per case: `<id>.json` (native),
/// `<id>.nii` or `<id>.nii.gz`.
pub fn find_prediction(dir: &Path, case_id: &str) -> Result<LabelVolume> {
    for ext in ["json", "nii.gz", "nii"] {
        let p = dir.join(format!("{case_id}.{ext}"));
        if p.is_file() {
            return read_label_volume(&p);
        }
    }
    Err(Error::Invalid(format!("no prediction for case {case_id} in {}", dir.display())))
}

/// `(id, prediction, reference)` for every labelled case of a dataset.
pub fn prediction_pairs(pred_dir: &Path, dataset: &Path) -> Result<Vec<(String, LabelVolume, LabelVolume)>> {
    let cases = load_cases(dataset)?;
    cases
        .into_iter()
        .map(|case| {
            let (id, _, label) = case.into_parts();
            let reference = label.ok_or_else(|| Error::NoLabel(id.clone()))?;
            let pred = find_prediction(pred_dir, &id)?;
            Ok((id, pred, reference))
        })
        .collect()
}
