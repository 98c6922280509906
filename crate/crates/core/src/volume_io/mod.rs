//! Volumetric images, label maps and cases, plus their on-disk formats.
//!
//! Axis convention: axis 0 is the axis listed first in shape strings such as
//! `115x320x232`, which is the out-of-plane (lowest resolution) axis for
//! anisotropic data. NIfTI files are mapped so that their fastest-varying axis
//! (`dim[1]`) becomes axis 2.

mod case;
mod document;
mod native;
mod nifti;

pub use case::{read_case, write_case_manifest, CaseManifest, ChannelEntry};
pub use document::{read_document, write_document, Versioned};
pub use native::{read_label_volume, read_native, read_volume, write_native, NativeData, NativeMeta};
pub use nifti::{parse_nifti, read_nifti, read_nifti_labels, NiftiDatatype, NiftiHeader};

use crate::error::{Error, Result};
use crate::grid::Grid;

const SPACING_TOL: f64 = 1e-6;

fn check_spacing(spacing: &[f64; 3]) -> Result<()> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("spacing must be positive, got {spacing:?}")))
    }
}

fn shape3(grid_shape: &[usize]) -> Result<[usize; 3]> {
    <[usize; 3]>::try_from(grid_shape)
        .map_err(|_| Error::ShapeMismatch(format!("expected a 3-D grid, got {grid_shape:?}")))
}

/// Scalar image on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    data: Grid<f32>,
    spacing: [f64; 3],
    modality: String,
}

impl Volume {
    pub fn new(shape: [usize; 3], spacing: [f64; 3], data: Vec<f32>, modality: impl Into<String>) -> Result<Self> {
        Self::from_grid(Grid::new(shape.to_vec(), data)?, spacing, modality)
    }

    pub fn from_grid(data: Grid<f32>, spacing: [f64; 3], modality: impl Into<String>) -> Result<Self> {
        shape3(data.shape())?;
        check_spacing(&spacing)?;
        Ok(Self { data, spacing, modality: modality.into() })
    }

    pub fn shape(&self) -> [usize; 3] {
        shape3(self.data.shape()).expect("validated on construction")
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn modality(&self) -> &str {
        &self.modality
    }

    pub fn grid(&self) -> &Grid<f32> {
        &self.data
    }

    pub fn data(&self) -> &[f32] {
        self.data.data()
    }

    pub fn into_grid(self) -> Grid<f32> {
        self.data
    }

    /// Same spacing and modality, new voxel data of identical shape.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Volume::new(self.shape(), self.spacing, data, self.modality.clone())
    }
}

/// Integer label map; 0 is background, classes are `1..=num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    data: Grid<u16>,
    spacing: [f64; 3],
    num_classes: u16,
}

impl LabelVolume {
    pub fn new(shape: [usize; 3], spacing: [f64; 3], data: Vec<u16>, num_classes: u16) -> Result<Self> {
        Self::from_grid(Grid::new(shape.to_vec(), data)?, spacing, num_classes)
    }

    pub fn from_grid(data: Grid<u16>, spacing: [f64; 3], num_classes: u16) -> Result<Self> {
        shape3(data.shape())?;
        check_spacing(&spacing)?;
        if let Some(v) = data.data().iter().find(|&&v| v > num_classes) {
            return Err(Error::Invalid(format!("label value {v} exceeds class count {num_classes}")));
        }
        Ok(Self { data, spacing, num_classes })
    }

    /// Class count taken from the largest label present.
    pub fn from_grid_inferred(data: Grid<u16>, spacing: [f64; 3]) -> Result<Self> {
        let c = data.data().iter().copied().max().unwrap_or(0);
        Self::from_grid(data, spacing, c)
    }

    pub fn shape(&self) -> [usize; 3] {
        shape3(self.data.shape()).expect("validated on construction")
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn grid(&self) -> &Grid<u16> {
        &self.data
    }

    pub fn data(&self) -> &[u16] {
        self.data.data()
    }

    pub fn into_grid(self) -> Grid<u16> {
        self.data
    }

    pub fn with_num_classes(mut self, num_classes: u16) -> Result<Self> {
        if num_classes < self.num_classes {
            return Self::from_grid(self.data, self.spacing, num_classes);
        }
        self.num_classes = num_classes;
        Ok(self)
    }
}

/// One training or inference case: co-registered channels and an optional label.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub id: String,
    channels: Vec<Volume>,
    label: Option<LabelVolume>,
}

impl Case {
    pub fn new(id: impl Into<String>, channels: Vec<Volume>, label: Option<LabelVolume>) -> Result<Self> {
        let id = id.into();
        let first = channels.first().ok_or_else(|| Error::MissingChannel(format!("case {id} has no channels")))?;
        let (shape, spacing) = (first.shape(), first.spacing());
        let same = |s: [usize; 3], sp: [f64; 3]| {
            s == shape && sp.iter().zip(&spacing).all(|(a, b)| (a - b).abs() <= SPACING_TOL)
        };
        for (i, ch) in channels.iter().enumerate() {
            if !same(ch.shape(), ch.spacing()) {
                return Err(Error::GeometryMismatch(format!(
                    "case {id}: channel {i} is {:?} @ {:?}, channel 0 is {shape:?} @ {spacing:?}",
                    ch.shape(),
                    ch.spacing()
                )));
            }
        }
        if let Some(l) = &label {
            if !same(l.shape(), l.spacing()) {
                return Err(Error::GeometryMismatch(format!(
                    "case {id}: label is {:?} @ {:?}, channels are {shape:?} @ {spacing:?}",
                    l.shape(),
                    l.spacing()
                )));
            }
        }
        Ok(Self { id, channels, label })
    }

    pub fn channels(&self) -> &[Volume] {
        &self.channels
    }

    pub fn label(&self) -> Option<&LabelVolume> {
        self.label.as_ref()
    }

    pub fn shape(&self) -> [usize; 3] {
        self.channels[0].shape()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.channels[0].spacing()
    }

    pub fn into_parts(self) -> (String, Vec<Volume>, Option<LabelVolume>) {
        (self.id, self.channels, self.label)
    }
}
