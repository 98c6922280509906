use serde::{Deserialize, Serialize};

use super::interp::{resample_line, Interp};
use crate::error::{Error, Result};
use crate::grid::{map_lines, Grid};
use crate::planner::ANISOTROPY_THRESHOLD;
use crate::volume_io::{LabelVolume, Volume};

/// Relative spacing difference below which an axis is copied unchanged.
const IDENTITY_TOLERANCE: f64 = 1e-9;

/// Interpolators for image data, label channels and the coarse axis of an
/// anisotropic image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplingPolicy {
    pub data_interp: Interp,
    pub label_interp: Interp,
    pub out_of_plane_interp: Interp,
    pub anisotropy_threshold: f64,
}

impl Default for ResamplingPolicy {
    fn default() -> Self {
        Self {
            data_interp: Interp::Spline3,
            label_interp: Interp::Linear,
            out_of_plane_interp: Interp::Nearest,
            anisotropy_threshold: ANISOTROPY_THRESHOLD,
        }
    }
}

impl ResamplingPolicy {
    /// Per-axis interpolator for an image with `spacing`. The coarsest axis of
    /// an image with max/min spacing above the threshold is resampled with
    /// the out-of-plane interpolator.
    pub fn axis_interps(&self, spacing: [f64; 3], base: Interp) -> [Interp; 3] {
        let max = spacing.iter().copied().fold(f64::MIN, f64::max);
        let min = spacing.iter().copied().fold(f64::MAX, f64::min);
        let mut out = [base; 3];
        if max / min > self.anisotropy_threshold {
            let coarse = (0..3).find(|&a| spacing[a] == max).unwrap_or(0);
            out[coarse] = self.out_of_plane_interp;
        }
        out
    }
}

fn check_target(target: [f64; 3]) -> Result<()> {
    if target.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::DegenerateTarget(target.to_vec()));
    }
    Ok(())
}

/// `round_half_up(shape · spacing / target)`, at least 1.
pub fn output_shape(shape: [usize; 3], spacing: [f64; 3], target: [f64; 3]) -> [usize; 3] {
    [0, 1, 2].map(|a| ((shape[a] as f64 * spacing[a] / target[a] + 0.5).floor() as usize).max(1))
}

fn is_identity(n: usize, m: usize, spacing: f64, target: f64) -> bool {
    n == m && ((spacing - target) / target).abs() < IDENTITY_TOLERANCE
}

/// Separable resampling of a 3-D grid, one axis at a time.
pub(crate) fn resample_grid(
    grid: &Grid<f64>,
    spacing: [f64; 3],
    target: [f64; 3],
    interps: [Interp; 3],
) -> Result<Grid<f64>> {
    check_target(target)?;
    let shape = [grid.shape()[0], grid.shape()[1], grid.shape()[2]];
    let out = output_shape(shape, spacing, target);
    let mut cur_shape = grid.shape().to_vec();
    let mut cur = grid.data().to_vec();
    for a in 0..3 {
        if is_identity(shape[a], out[a], spacing[a], target[a]) {
            continue;
        }
        let scale = target[a] / spacing[a];
        let (s, d) = map_lines(&cur_shape, &cur, a, out[a], |line, res| resample_line(line, res, scale, interps[a]));
        cur_shape = s;
        cur = d;
    }
    Grid::new(cur_shape, cur)
}

pub fn resample_volume(vol: &Volume, target: [f64; 3]) -> Result<Volume> {
    resample_volume_with(vol, target, &ResamplingPolicy::default())
}

pub fn resample_volume_with(vol: &Volume, target: [f64; 3], policy: &ResamplingPolicy) -> Result<Volume> {
    let interps = policy.axis_interps(vol.spacing(), policy.data_interp);
    let g = resample_grid(&vol.grid().map(f64::from), vol.spacing(), target, interps)?;
    Volume::from_grid(g.map(|v| v as f32), target, vol.modality())
}

pub fn resample_labels(label: &LabelVolume, target: [f64; 3]) -> Result<LabelVolume> {
    resample_labels_with(label, target, &ResamplingPolicy::default())
}

/// Interpolate each present class as a one-hot channel and take the argmax,
/// ties going to the lower class.
pub fn resample_labels_with(label: &LabelVolume, target: [f64; 3], policy: &ResamplingPolicy) -> Result<LabelVolume> {
    check_target(target)?;
    let interps = policy.axis_interps(label.spacing(), policy.label_interp);
    let mut present: Vec<u16> = label.data().to_vec();
    present.sort_unstable();
    present.dedup();
    let out_shape = output_shape(label.shape(), label.spacing(), target);
    let n: usize = out_shape.iter().product();
    let mut best = vec![f64::NEG_INFINITY; n];
    let mut out = vec![0u16; n];
    for &c in &present {
        let onehot = label.grid().map(|v| if v == c { 1.0 } else { 0.0 });
        let r = resample_grid(&onehot, label.spacing(), target, interps)?;
        for (i, &p) in r.data().iter().enumerate() {
            // classes arrive in ascending order, so strict > keeps the lower one on ties
            if p > best[i] {
                best[i] = p;
                out[i] = c;
            }
        }
    }
    LabelVolume::new(out_shape, target, out, label.num_classes())
}
