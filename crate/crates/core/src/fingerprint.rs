//! Dataset fingerprint: cropping to the nonzero region and the per-dataset
//! summary (shapes, spacings, class set, foreground intensity statistics)
//! consumed by the planner.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::for_each_index;
use crate::rng::{child_seed, string_key, RngStream};
use crate::volume_io::{Case, LabelVolume, Versioned, Volume};

/// Foreground voxels kept per case before seeded subsampling kicks in.
pub const MAX_FOREGROUND_SAMPLES: usize = 10_000;

/// Axis-aligned box, `lo` inclusive and `hi` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl BoundingBox {
    pub fn full(shape: [usize; 3]) -> Self {
        Self { lo: [0; 3], hi: shape }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], self.hi[2] - self.lo[2]]
    }
}

/// Tight box around voxels where any channel is nonzero.
pub fn nonzero_bbox(channels: &[Volume]) -> Option<BoundingBox> {
    let shape = channels.first()?.shape();
    let mut lo = shape;
    let mut hi = [0usize; 3];
    let mut any = false;
    for_each_index(&shape, |idx, flat| {
        if channels.iter().any(|c| c.data()[flat] != 0.0) {
            any = true;
            for a in 0..3 {
                lo[a] = lo[a].min(idx[a]);
                hi[a] = hi[a].max(idx[a] + 1);
            }
        }
    });
    any.then_some(BoundingBox { lo, hi })
}

/// Restrict every channel and the label to `bbox`.
pub fn crop_case(case: &Case, bbox: &BoundingBox) -> Result<Case> {
    let channels = case
        .channels()
        .iter()
        .map(|c| Volume::from_grid(c.grid().crop(&bbox.lo, &bbox.hi), c.spacing(), c.modality()))
        .collect::<Result<Vec<_>>>()?;
    let label = case
        .label()
        .map(|l| LabelVolume::from_grid(l.grid().crop(&bbox.lo, &bbox.hi), l.spacing(), l.num_classes()))
        .transpose()?;
    Case::new(case.id.clone(), channels, label)
}

/// Crop to the nonzero region of the channels. A case without any nonzero
/// voxel is returned unchanged together with its full-extent box.
pub fn crop_to_nonzero(case: &Case) -> Result<(Case, BoundingBox)> {
    match nonzero_bbox(case.channels()) {
        Some(b) if b.shape() != case.shape() => Ok((crop_case(case, &b)?, b)),
        Some(b) => Ok((case.clone(), b)),
        None => Ok((case.clone(), BoundingBox::full(case.shape()))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFingerprint {
    pub id: String,
    pub shape_before_crop: [usize; 3],
    pub shape_after_crop: [usize; 3],
    pub bbox: BoundingBox,
    pub spacing: [f64; 3],
    pub modalities: Vec<String>,
    pub num_classes: u16,
    pub classes_present: Vec<u16>,
    /// Per channel: intensities at foreground voxels (possibly subsampled).
    pub foreground_samples: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, Copy)]
pub struct FingerprintOptions {
    pub foreground_stats: bool,
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for FingerprintOptions {
    fn default() -> Self {
        Self { foreground_stats: true, max_samples: MAX_FOREGROUND_SAMPLES, seed: 0 }
    }
}

/// Crop the case and collect its shape, spacing, class set and foreground sample.
pub fn extract_case_fingerprint(case: &Case, opts: &FingerprintOptions) -> Result<CaseFingerprint> {
    if opts.foreground_stats && case.label().is_none() {
        return Err(Error::NoLabel(case.id.clone()));
    }
    let (cropped, bbox) = crop_to_nonzero(case)?;
    let mut classes = BTreeSet::new();
    let mut fg_idx = Vec::new();
    if let Some(label) = cropped.label() {
        for (i, &v) in label.data().iter().enumerate() {
            if v > 0 {
                classes.insert(v);
                fg_idx.push(i);
            }
        }
    }
    if fg_idx.len() > opts.max_samples {
        let mut rng = RngStream::new(child_seed(opts.seed, string_key(&case.id)));
        let keep = rng.sample_indices(fg_idx.len(), opts.max_samples);
        fg_idx = keep.into_iter().map(|k| fg_idx[k]).collect();
    }
    let foreground_samples = if opts.foreground_stats {
        cropped.channels().iter().map(|c| fg_idx.iter().map(|&i| c.data()[i]).collect()).collect()
    } else {
        vec![Vec::new(); cropped.channels().len()]
    };
    Ok(CaseFingerprint {
        id: case.id.clone(),
        shape_before_crop: case.shape(),
        shape_after_crop: cropped.shape(),
        bbox,
        spacing: case.spacing(),
        modalities: case.channels().iter().map(|c| c.modality().to_string()).collect(),
        num_classes: case.label().map_or(0, |l| l.num_classes()),
        classes_present: classes.into_iter().collect(),
        foreground_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForegroundStats {
    pub mean: f64,
    pub std: f64,
    pub p0_5: f64,
    pub p99_5: f64,
}

impl ForegroundStats {
    /// Population statistics of a non-empty sample.
    pub fn from_values(values: &[f32]) -> Result<Self> {
        let mut v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        if v.is_empty() {
            return Err(Error::EmptyInput("foreground sample"));
        }
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Ok(Self { mean, std: var.sqrt(), p0_5: percentile(&v, 0.005)?, p99_5: percentile(&v, 0.995)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub schema_version: u64,
    pub n_cases: usize,
    pub case_ids: Vec<String>,
    pub median_shape: [usize; 3],
    /// Cropped shape of every case, in `case_ids` order.
    pub shapes: Vec<[usize; 3]>,
    /// Spacing of every case, in `case_ids` order.
    pub spacings: Vec<[f64; 3]>,
    pub modalities: Vec<String>,
    pub n_classes: u16,
    /// Pooled foreground statistics per channel; `None` when no case had foreground.
    pub foreground: Vec<Option<ForegroundStats>>,
    pub total_voxels: u64,
    pub crop_reduction: f64,
}

impl Versioned for DatasetFingerprint {
    const SCHEMA_VERSION: u64 = 1;
}

/// Combine case fingerprints; the result does not depend on input order.
pub fn aggregate_dataset_fingerprint(cases: &[CaseFingerprint]) -> Result<DatasetFingerprint> {
    if cases.is_empty() {
        return Err(Error::EmptyInput("no case fingerprints"));
    }
    let mut sorted: Vec<&CaseFingerprint> = cases.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let n_channels = sorted[0].modalities.len();
    for c in &sorted {
        if c.modalities.len() != n_channels || c.foreground_samples.len() != n_channels {
            return Err(Error::InconsistentChannels(format!(
                "case {} has {} channels, case {} has {n_channels}",
                c.id,
                c.modalities.len(),
                sorted[0].id
            )));
        }
    }
    let shapes: Vec<[usize; 3]> = sorted.iter().map(|c| c.shape_after_crop).collect();
    let mut median_shape = [0; 3];
    for (a, m) in median_shape.iter_mut().enumerate() {
        *m = median_lower(shapes.iter().map(|s| s[a]).collect());
    }
    let mut foreground = Vec::with_capacity(n_channels);
    for ch in 0..n_channels {
        let pooled: Vec<f32> = sorted.iter().flat_map(|c| c.foreground_samples[ch].iter().copied()).collect();
        foreground.push(if pooled.is_empty() { None } else { Some(ForegroundStats::from_values(&pooled)?) });
    }
    let total_voxels = shapes.iter().map(|s| s.iter().product::<usize>() as u64).sum();
    let crop_reduction = sorted
        .iter()
        .map(|c| {
            let before: usize = c.shape_before_crop.iter().product();
            let after: usize = c.shape_after_crop.iter().product();
            1.0 - after as f64 / before as f64
        })
        .sum::<f64>()
        / sorted.len() as f64;
    Ok(DatasetFingerprint {
        schema_version: DatasetFingerprint::SCHEMA_VERSION,
        n_cases: sorted.len(),
        case_ids: sorted.iter().map(|c| c.id.clone()).collect(),
        median_shape,
        shapes,
        spacings: sorted.iter().map(|c| c.spacing).collect(),
        modalities: sorted[0].modalities.clone(),
        n_classes: sorted.iter().map(|c| c.num_classes).max().unwrap_or(0),
        foreground,
        total_voxels,
        crop_reduction,
    })
}

/// Linear-interpolation percentile of an ascending list: rank `q·(n−1)`.
pub fn percentile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyInput("percentile of empty list"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Invalid(format!("percentile fraction {q} outside [0, 1]")));
    }
    let r = q * (sorted.len() - 1) as f64;
    let lo = r.floor() as usize;
    let hi = r.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (r - lo as f64))
}

/// Median of integers; even counts take the lower middle element.
pub fn median_lower(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Median of reals; even counts average the two middle elements.
pub fn median_f64(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
