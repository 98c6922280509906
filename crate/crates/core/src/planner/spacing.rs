use serde::{Deserialize, Serialize};

use super::plan::round_half_up;
use crate::error::{Error, Result};
use crate::fingerprint::{median_f64, median_lower, percentile, DatasetFingerprint};

/// Spacing and shape anisotropy above which the coarsest axis takes a low
/// percentile of its spacings instead of the median.
pub const ANISOTROPY_THRESHOLD: f64 = 3.0;
pub const ANISOTROPIC_SPACING_PERCENTILE: f64 = 0.10;
/// Mean crop reduction at which z-scoring is restricted to the nonzero mask.
pub const MASKED_NORMALIZATION_CROP: f64 = 0.25;

fn ratio_max_min(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = v.clone().fold(f64::MIN, f64::max);
    let min = v.fold(f64::MAX, f64::min);
    max / min
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn axis_spacings(fp: &DatasetFingerprint, axis: usize) -> Vec<f64> {
    fp.spacings.iter().map(|s| s[axis]).collect()
}

/// Per-axis median spacing. When both the median spacing and the median
/// shape are more than 3× anisotropic, the coarsest axis uses the 10th
/// percentile of its spacings instead.
pub fn target_spacing_fullres(fp: &DatasetFingerprint) -> Result<[f64; 3]> {
    if fp.spacings.is_empty() {
        return Err(Error::EmptyInput("fingerprint has no spacings"));
    }
    let mut target = [0.0; 3];
    for (a, t) in target.iter_mut().enumerate() {
        *t = median_f64(&axis_spacings(fp, a));
    }
    let spacing_aniso = ratio_max_min(target.iter().copied());
    let shape_aniso = ratio_max_min(fp.median_shape.iter().map(|&s| s as f64));
    if spacing_aniso > ANISOTROPY_THRESHOLD && shape_aniso > ANISOTROPY_THRESHOLD {
        let axis = argmax_first(&target);
        let mut v = axis_spacings(fp, axis);
        v.sort_by(f64::total_cmp);
        target[axis] = percentile(&v, ANISOTROPIC_SPACING_PERCENTILE)?;
    }
    Ok(target)
}

/// The two finest axes of a median spacing triple. The out-of-plane axis is
/// the coarsest; ties resolve to the earliest axis, so isotropic data keeps
/// the two trailing axes.
pub fn plane_axes(spacing: &[f64; 3]) -> [usize; 2] {
    match argmax_first(spacing) {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

/// In-plane axes and their median spacing. The remaining axis is not resampled.
pub fn target_spacing_2d(fp: &DatasetFingerprint) -> Result<([usize; 2], [f64; 2])> {
    if fp.spacings.is_empty() {
        return Err(Error::EmptyInput("fingerprint has no spacings"));
    }
    let medians = [0, 1, 2].map(|a| median_f64(&axis_spacings(fp, a)));
    let axes = plane_axes(&medians);
    Ok((axes, [medians[axes[0]], medians[axes[1]]]))
}

/// Per-axis median (lower middle) of the case shapes after resampling the
/// listed axes to `target`.
pub fn median_resampled_shape(fp: &DatasetFingerprint, axes: &[usize], target: &[f64]) -> Result<Vec<usize>> {
    if fp.shapes.is_empty() || fp.shapes.len() != fp.spacings.len() {
        return Err(Error::EmptyInput("fingerprint has no shapes"));
    }
    Ok(axes
        .iter()
        .zip(target)
        .map(|(&a, &t)| {
            median_lower(
                fp.shapes
                    .iter()
                    .zip(&fp.spacings)
                    .map(|(s, sp)| round_half_up(s[a] as f64 * sp[a] / t).max(1))
                    .collect(),
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum NormalizationScheme {
    ZScorePerImage,
    MaskedZScorePerImage,
    #[serde(rename = "CTGlobal")]
    CtGlobal {
        clip_low: f64,
        clip_high: f64,
        global_mean: f64,
        global_std: f64,
    },
}

impl NormalizationScheme {
    pub fn ct_global(clip_low: f64, clip_high: f64, global_mean: f64, global_std: f64) -> Result<Self> {
        if !(clip_low < clip_high) || !(global_std > 0.0) {
            return Err(Error::Invalid(format!(
                "CT normalization needs clip_low < clip_high and std > 0, got [{clip_low}, {clip_high}] std {global_std}"
            )));
        }
        Ok(Self::CtGlobal { clip_low, clip_high, global_mean, global_std })
    }
}

pub fn is_ct(modality: &str) -> bool {
    modality.eq_ignore_ascii_case("CT")
}

/// CT channels use dataset-wide clipping and statistics; everything else is
/// z-scored per image, within the nonzero mask when cropping removed at
/// least a quarter of the volume on average.
pub fn select_normalization(fp: &DatasetFingerprint, channel: usize) -> Result<NormalizationScheme> {
    let modality = fp
        .modalities
        .get(channel)
        .ok_or_else(|| Error::Invalid(format!("channel {channel} out of range ({} channels)", fp.modalities.len())))?;
    if is_ct(modality) {
        let s = fp.foreground.get(channel).copied().flatten().ok_or(Error::MissingStats { channel })?;
        return NormalizationScheme::ct_global(s.p0_5, s.p99_5, s.mean, s.std);
    }
    if fp.crop_reduction >= MASKED_NORMALIZATION_CROP {
        Ok(NormalizationScheme::MaskedZScorePerImage)
    } else {
        Ok(NormalizationScheme::ZScorePerImage)
    }
}
