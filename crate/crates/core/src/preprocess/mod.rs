//! Crop, resample to the plan's target spacing, normalize.
//!
//! Images use a cubic B-spline; label maps are resampled as one-hot channels
//! with linear interpolation followed by an argmax. When an image's spacing
//! is more than 3× anisotropic its coarsest axis uses nearest neighbour.

mod interp;
mod normalize;
mod resample;

use serde::{Deserialize, Serialize};

pub use interp::{resample_line, source_coord, source_coord_extent, Interp};
pub use normalize::{normalize, MIN_STD};
pub use resample::{
    output_shape, resample_labels, resample_labels_with, resample_volume, resample_volume_with, ResamplingPolicy,
};

use crate::error::{Error, Result};
use crate::fingerprint::{crop_to_nonzero, BoundingBox};
use crate::planner::{NormalizationScheme, PlanKind, UNetPlan};
use crate::volume_io::{Case, LabelVolume};

/// What happened to one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub case_id: String,
    pub plan_kind: PlanKind,
    pub bbox: BoundingBox,
    pub shape_before_crop: [usize; 3],
    pub shape_after_crop: [usize; 3],
    pub shape_after_resampling: [usize; 3],
    pub source_spacing: [f64; 3],
    pub target_spacing: [f64; 3],
    pub data_interp: [Interp; 3],
    pub label_interp: [Interp; 3],
}

pub fn preprocess_case(case: &Case, plan: &UNetPlan) -> Result<(Case, PreprocessRecord)> {
    preprocess_case_with(case, plan, &ResamplingPolicy::default())
}

pub fn preprocess_case_with(
    case: &Case,
    plan: &UNetPlan,
    policy: &ResamplingPolicy,
) -> Result<(Case, PreprocessRecord)> {
    if plan.normalization.len() != case.channels().len() {
        return Err(Error::InconsistentChannels(format!(
            "plan normalizes {} channels, case {} has {}",
            plan.normalization.len(),
            case.id,
            case.channels().len()
        )));
    }
    let (cropped, bbox) = crop_to_nonzero(case)?;
    let source = cropped.spacing();
    let target = plan.resample_target(source);

    let needs_mask = plan.normalization.contains(&NormalizationScheme::MaskedZScorePerImage);
    let mask = if needs_mask {
        let nonzero: Vec<u16> = (0..cropped.channels()[0].data().len())
            .map(|i| u16::from(cropped.channels().iter().any(|c| c.data()[i] != 0.0)))
            .collect();
        let m = resample_labels_with(&LabelVolume::new(cropped.shape(), source, nonzero, 1)?, target, policy)?;
        Some(m.data().iter().map(|&v| v > 0).collect::<Vec<bool>>())
    } else {
        None
    };

    let mut channels = Vec::with_capacity(cropped.channels().len());
    for (ch, scheme) in cropped.channels().iter().zip(&plan.normalization) {
        let r = resample_volume_with(ch, target, policy)?;
        channels.push(normalize(&r, scheme, mask.as_deref())?);
    }
    let label = cropped.label().map(|l| resample_labels_with(l, target, policy)).transpose()?;
    let out = Case::new(case.id.clone(), channels, label)?;
    let record = PreprocessRecord {
        case_id: case.id.clone(),
        plan_kind: plan.kind,
        bbox,
        shape_before_crop: case.shape(),
        shape_after_crop: cropped.shape(),
        shape_after_resampling: out.shape(),
        source_spacing: source,
        target_spacing: target,
        data_interp: policy.axis_interps(source, policy.data_interp),
        label_interp: policy.axis_interps(source, policy.label_interp),
    };
    Ok((out, record))
}
