use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::for_each_index;
use crate::rng::RngStream;
use crate::volume_io::LabelVolume;

/// Share of each batch forced to contain foreground.
pub const FOREGROUND_FRACTION: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSample {
    /// Corner of the patch; negative or overhanging when the patch exceeds
    /// the volume and the crop is zero-padded.
    pub origin: [i64; 3],
    pub forced_class: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSamples {
    pub samples: Vec<PatchSample>,
    /// Set when oversampling was requested but the label has no foreground.
    pub no_foreground: bool,
}

/// `max(1, round(batch / 3))`.
pub fn foreground_count(batch: usize) -> usize {
    ((batch as f64 * FOREGROUND_FRACTION + 0.5).floor() as usize).max(1)
}

/// Random patches first, then the forced-foreground ones, each centered on a
/// random voxel of a randomly chosen foreground class present in `label`.
pub fn sample_patch_origins(
    label: &LabelVolume,
    patch: [usize; 3],
    batch: usize,
    rng: &mut RngStream,
) -> Result<PatchSamples> {
    if batch == 0 || patch.contains(&0) {
        return Err(Error::Invalid(format!("batch {batch} and patch {patch:?} must be positive")));
    }
    let shape = label.shape();
    let bounds: [(i64, i64); 3] = [0, 1, 2].map(|a| {
        let slack = shape[a] as i64 - patch[a] as i64;
        (slack.min(0), slack.max(0))
    });

    let mut voxels: Vec<Vec<[usize; 3]>> = vec![Vec::new(); label.num_classes() as usize + 1];
    for_each_index(&shape, |idx, flat| {
        let c = label.data()[flat] as usize;
        if c > 0 {
            voxels[c].push([idx[0], idx[1], idx[2]]);
        }
    });
    let present: Vec<usize> = (1..voxels.len()).filter(|&c| !voxels[c].is_empty()).collect();

    let n_fg = if present.is_empty() { 0 } else { foreground_count(batch).min(batch) };
    let mut samples = Vec::with_capacity(batch);
    for _ in 0..batch - n_fg {
        let origin = bounds.map(|(lo, hi)| lo + rng.index((hi - lo + 1) as usize) as i64);
        samples.push(PatchSample { origin, forced_class: None });
    }
    for _ in 0..n_fg {
        let class = present[rng.index(present.len())];
        let v = voxels[class][rng.index(voxels[class].len())];
        let origin = [0, 1, 2].map(|a| (v[a] as i64 - (patch[a] / 2) as i64).clamp(bounds[a].0, bounds[a].1));
        samples.push(PatchSample { origin, forced_class: Some(class as u16) });
    }
    Ok(PatchSamples { samples, no_foreground: present.is_empty() })
}
