//! Native volume format: raw little-endian payload next to a JSON sidecar.
//!
//! `case.json` describes the grid and points at `case.raw`.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use super::{LabelVolume, Volume};
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const NATIVE_SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NativeKind {
    Image,
    Label,
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NativeMeta {
    pub schema_version: u64,
    pub kind: NativeKind,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub spacing: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<u16>,
    pub payload: String,
}

/// Anything the native format can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum NativeData {
    Image(Volume),
    Label(LabelVolume),
    /// Class-probability grid with a leading class axis.
    Probability {
        probs: Grid<f32>,
        spacing: [f64; 3],
    },
}

fn payload_name(sidecar: &Path) -> Result<String> {
    let stem = sidecar
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Invalid(format!("bad native path {}", sidecar.display())))?;
    Ok(format!("{stem}.raw"))
}

pub fn write_native(path: &Path, data: &NativeData) -> Result<()> {
    let payload = payload_name(path)?;
    let (meta, bytes) = match data {
        NativeData::Image(v) => (
            NativeMeta {
                schema_version: NATIVE_SCHEMA_VERSION,
                kind: NativeKind::Image,
                dtype: "f32".into(),
                shape: v.shape().to_vec(),
                spacing: v.spacing(),
                modality: Some(v.modality().to_string()),
                num_classes: None,
                payload: payload.clone(),
            },
            f32_bytes(v.data()),
        ),
        NativeData::Label(l) => {
            let mut bytes = vec![0u8; l.data().len() * 2];
            LittleEndian::write_u16_into(l.data(), &mut bytes);
            (
                NativeMeta {
                    schema_version: NATIVE_SCHEMA_VERSION,
                    kind: NativeKind::Label,
                    dtype: "u16".into(),
                    shape: l.shape().to_vec(),
                    spacing: l.spacing(),
                    modality: None,
                    num_classes: Some(l.num_classes()),
                    payload: payload.clone(),
                },
                bytes,
            )
        }
        NativeData::Probability { probs, spacing } => (
            NativeMeta {
                schema_version: NATIVE_SCHEMA_VERSION,
                kind: NativeKind::Probability,
                dtype: "f32".into(),
                shape: probs.shape().to_vec(),
                spacing: *spacing,
                modality: None,
                num_classes: Some((probs.shape()[0].max(1) - 1) as u16),
                payload: payload.clone(),
            },
            f32_bytes(probs.data()),
        ),
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    let raw_path = dir.join(&payload);
    std::fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    let mut text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn f32_bytes(v: &[f32]) -> Vec<u8> {
    let mut bytes = vec![0u8; v.len() * 4];
    LittleEndian::write_f32_into(v, &mut bytes);
    bytes
}

pub fn read_native(path: &Path) -> Result<NativeData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
    if found != NATIVE_SCHEMA_VERSION {
        return Err(Error::SchemaVersionMismatch { found, expected: NATIVE_SCHEMA_VERSION });
    }
    let meta: NativeMeta = serde_json::from_value(value).map_err(|e| Error::json(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let raw_path = dir.join(&meta.payload);
    let bytes = std::fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let n: usize = meta.shape.iter().product();
    let width = match meta.dtype.as_str() {
        "f32" => 4,
        "u16" => 2,
        other => return Err(Error::Invalid(format!("unknown native dtype {other}"))),
    };
    if bytes.len() != n * width {
        return Err(Error::TruncatedFile(format!(
            "{}: payload has {} bytes, shape {:?} needs {}",
            raw_path.display(),
            bytes.len(),
            meta.shape,
            n * width
        )));
    }
    match (meta.kind, width) {
        (NativeKind::Image, 4) => {
            let shape = <[usize; 3]>::try_from(meta.shape.as_slice())
                .map_err(|_| Error::ShapeMismatch(format!("image shape {:?}", meta.shape)))?;
            let mut data = vec![0f32; n];
            LittleEndian::read_f32_into(&bytes, &mut data);
            Ok(NativeData::Image(Volume::new(shape, meta.spacing, data, meta.modality.unwrap_or_default())?))
        }
        (NativeKind::Label, 2) => {
            let mut data = vec![0u16; n];
            LittleEndian::read_u16_into(&bytes, &mut data);
            let grid = Grid::new(meta.shape, data)?;
            Ok(NativeData::Label(match meta.num_classes {
                Some(c) => LabelVolume::from_grid(grid, meta.spacing, c)?,
                None => LabelVolume::from_grid_inferred(grid, meta.spacing)?,
            }))
        }
        (NativeKind::Probability, 4) => {
            let mut data = vec![0f32; n];
            LittleEndian::read_f32_into(&bytes, &mut data);
            Ok(NativeData::Probability { probs: Grid::new(meta.shape, data)?, spacing: meta.spacing })
        }
        (kind, _) => Err(Error::Invalid(format!("{kind:?} volume cannot use dtype {}", meta.dtype))),
    }
}

/// Read an intensity image from a native sidecar or a NIfTI file (by extension).
/// A non-empty `modality` overrides the tag stored in a native sidecar.
pub fn read_volume(path: &Path, modality: &str) -> Result<Volume> {
    if is_nifti(path) {
        return super::read_nifti(path, modality);
    }
    match read_native(path)? {
        NativeData::Image(v) if modality.is_empty() || v.modality() == modality => Ok(v),
        NativeData::Image(v) => {
            let spacing = v.spacing();
            Volume::from_grid(v.into_grid(), spacing, modality)
        }
        _ => Err(Error::Invalid(format!("{} is not an image volume", path.display()))),
    }
}

/// Read a label map from a native sidecar or a NIfTI file (by extension).
pub fn read_label_volume(path: &Path) -> Result<LabelVolume> {
    if is_nifti(path) {
        return super::read_nifti_labels(path);
    }
    match read_native(path)? {
        NativeData::Label(l) => Ok(l),
        _ => Err(Error::Invalid(format!("{} is not a label volume", path.display()))),
    }
}

fn is_nifti(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".nii") || name.ends_with(".nii.gz")
}
