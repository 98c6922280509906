use serde::{Deserialize, Serialize};

use super::memory::estimate_memory;
use super::topology::{configure_topology, pad_for_pooling, TopologySpec};
use crate::error::{Error, Result};

pub const MIN_BATCH: usize = 2;
/// A batch may cover at most this fraction of the dataset's voxels.
pub const MAX_BATCH_VOXEL_FRACTION: f64 = 0.05;
/// A cascade is needed when the full-resolution patch covers less than this
/// fraction of the median image.
pub const CASCADE_COVERAGE: f64 = 0.125;
/// The low-resolution patch must cover at least this fraction of its median image.
pub const LOWRES_COVERAGE: f64 = 0.25;
pub const LOWRES_SPACING_STEP: f64 = 1.01;
pub const MAX_LOWRES_ITERATIONS: usize = 10_000;
const MAX_REDUCTIONS: usize = 100_000;
/// Axes at or below this extent are never reduced further.
const MIN_PATCH_EXTENT: usize = 4;

pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchPlan {
    pub patch: Vec<usize>,
    pub batch: usize,
    pub topology: TopologySpec,
    /// Whether the patch had to shrink below the padded median shape.
    pub reduced: bool,
}

fn to_f64(v: &[usize]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Largest padded patch, starting from the median shape, whose batch-2 cost
/// fits the budget.
pub fn fit_patch(
    median: &[usize],
    spacing: &[f64],
    budget: f64,
    io_channels: usize,
) -> Result<(Vec<usize>, TopologySpec, bool)> {
    if median.len() != spacing.len() {
        return Err(Error::ShapeMismatch(format!("median {median:?} vs spacing {spacing:?}")));
    }
    if median.contains(&0) {
        return Err(Error::Invalid(format!("median shape {median:?} has an empty axis")));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Invalid(format!("budget must be positive, got {budget}")));
    }
    let dim = median.len();
    let mut topo = configure_topology(&to_f64(median), spacing)?;
    let mut patch = pad_for_pooling(&to_f64(median), &topo.pools_per_axis);
    let mut reduced = false;
    let mut steps = 0;
    while estimate_memory(&topo, &patch, MIN_BATCH, io_channels) > budget {
        let ratio = |a: usize| patch[a] as f64 / median[a] as f64;
        // ties go to the later axis
        let axis = (0..dim)
            .filter(|&a| patch[a] > MIN_PATCH_EXTENT)
            .max_by(|&a, &b| ratio(a).total_cmp(&ratio(b)).then(a.cmp(&b)))
            .ok_or(Error::BudgetTooSmall { dim })?;
        let mut tentative = to_f64(&patch);
        tentative[axis] -= topo.divisor(axis) as f64;
        let step = configure_topology(&tentative, spacing)?.divisor(axis);
        patch[axis] -= step;
        topo = configure_topology(&to_f64(&patch), spacing)?;
        patch = pad_for_pooling(&to_f64(&patch), &topo.pools_per_axis);
        reduced = true;
        steps += 1;
        if steps > MAX_REDUCTIONS {
            return Err(Error::NoConvergence { iterations: steps });
        }
    }
    Ok((patch, topo, reduced))
}

/// `max(2, round(0.05 · total_voxels / patch_voxels))`.
pub fn batch_cap(total_voxels: u64, patch: &[usize]) -> usize {
    let vox: f64 = patch.iter().map(|&p| p as f64).product();
    round_half_up(MAX_BATCH_VOXEL_FRACTION * total_voxels as f64 / vox).max(MIN_BATCH)
}

/// Patch, batch and topology for one configuration. A reduced patch trains
/// at batch 2; otherwise the batch grows while it fits, capped by
/// [`batch_cap`].
pub fn plan_unet(
    median: &[usize],
    spacing: &[f64],
    budget: f64,
    io_channels: usize,
    total_voxels: u64,
) -> Result<PatchPlan> {
    let (patch, topology, reduced) = fit_patch(median, spacing, budget, io_channels)?;
    let batch = if reduced {
        MIN_BATCH
    } else {
        let cap = batch_cap(total_voxels, &patch);
        let mut b = MIN_BATCH;
        while b < cap && estimate_memory(&topology, &patch, b + 1, io_channels) <= budget {
            b += 1;
        }
        b
    };
    Ok(PatchPlan { patch, batch, topology, reduced })
}

pub fn cascade_required(patch: &[usize], median: &[usize]) -> bool {
    let p: f64 = patch.iter().map(|&x| x as f64).product();
    let m: f64 = median.iter().map(|&x| x as f64).product();
    p / m < CASCADE_COVERAGE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowresPlan {
    pub spacing: Vec<f64>,
    pub median_shape: Vec<usize>,
    pub plan: PatchPlan,
    pub iterations: usize,
}

/// Coarsen the spacing in 1% steps until the fitted patch covers a quarter
/// of the median image. While the spacing is more than 2× anisotropic only
/// the finer axes grow.
pub fn plan_lowres(
    full_spacing: &[f64],
    full_median: &[usize],
    budget: f64,
    io_channels: usize,
    total_voxels: u64,
) -> Result<LowresPlan> {
    if full_spacing.len() != full_median.len() {
        return Err(Error::ShapeMismatch(format!("median {full_median:?} vs spacing {full_spacing:?}")));
    }
    let mut spacing = full_spacing.to_vec();
    for it in 1..=MAX_LOWRES_ITERATIONS {
        let max = spacing.iter().copied().fold(f64::MIN, f64::max);
        let anisotropic = spacing.iter().any(|&s| max / s > 2.0);
        for s in spacing.iter_mut() {
            if !anisotropic || max / *s > 2.0 {
                *s *= LOWRES_SPACING_STEP;
            }
        }
        let median: Vec<usize> = full_median
            .iter()
            .zip(full_spacing)
            .zip(&spacing)
            .map(|((&m, &fs), &s)| round_half_up(m as f64 * fs / s).max(1))
            .collect();
        let (patch, _, _) = fit_patch(&median, &spacing, budget, io_channels)?;
        let pv: f64 = patch.iter().map(|&p| p as f64).product();
        let mv: f64 = median.iter().map(|&m| m as f64).product();
        if pv >= LOWRES_COVERAGE * mv {
            let plan = plan_unet(&median, &spacing, budget, io_channels, total_voxels)?;
            return Ok(LowresPlan { spacing, median_shape: median, plan, iterations: it });
        }
    }
    Err(Error::NoConvergence { iterations: MAX_LOWRES_ITERATIONS })
}
