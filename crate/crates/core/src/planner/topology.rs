use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BASE_FEATURES: u32 = 32;
pub const FEATURE_CAP_3D: u32 = 320;
pub const FEATURE_CAP_2D: u32 = 512;

/// An axis pools only while its running size is at least twice the smallest
/// allowed feature-map edge (4 voxels).
pub const MIN_POOL_SIZE: f64 = 8.0;

/// Encoder layout of a U-Net: one kernel per resolution stage, one stride per
/// downsampling step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub dim: usize,
    pub kernel_sizes: Vec<Vec<u32>>,
    pub strides: Vec<Vec<u32>>,
    pub features_per_stage: Vec<u32>,
    pub pools_per_axis: Vec<u32>,
}

impl TopologySpec {
    pub fn n_stages(&self) -> usize {
        self.kernel_sizes.len()
    }

    /// `2^n` for the given axis: every patch extent must be a multiple of it.
    pub fn divisor(&self, axis: usize) -> usize {
        1 << self.pools_per_axis[axis]
    }
}

pub fn feature_cap(dim: usize) -> u32 {
    if dim == 3 {
        FEATURE_CAP_3D
    } else {
        FEATURE_CAP_2D
    }
}

/// `min(32·2^s, cap)`.
pub fn features_at(stage: usize, dim: usize) -> u32 {
    let cap = feature_cap(dim);
    if stage >= 16 {
        return cap;
    }
    (BASE_FEATURES << stage).min(cap)
}

/// Derive strides, kernels and per-axis pooling counts from fractional patch
/// extents and the voxel spacing.
///
/// At every stage the pooling cohort is the set of axes whose spacing is
/// below twice the current minimum spacing. Cohort axes with running size
/// ≥ 8 are halved (and their spacing doubled); the process ends when no axis
/// pools. A kernel is 3 on axes within a factor 2 of the minimum spacing and
/// stays 3 from then on.
pub fn configure_topology(patch: &[f64], spacing: &[f64]) -> Result<TopologySpec> {
    let dim = patch.len();
    if !(dim == 2 || dim == 3) || spacing.len() != dim {
        return Err(Error::Invalid(format!(
            "topology needs 2 or 3 axes with matching spacing, got patch {patch:?} spacing {spacing:?}"
        )));
    }
    if patch.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::Invalid(format!("patch extents must be positive, got {patch:?}")));
    }
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::DegenerateTarget(spacing.to_vec()));
    }

    let mut size = patch.to_vec();
    let mut sp = spacing.to_vec();
    let mut wide = vec![false; dim];
    let mut pools = vec![0u32; dim];
    let mut strides = Vec::new();
    let mut kernels = Vec::new();
    loop {
        let min_sp = sp.iter().copied().fold(f64::INFINITY, f64::min);
        let kernel = (0..dim)
            .map(|a| {
                if wide[a] || sp[a] <= 2.0 * min_sp {
                    wide[a] = true;
                    3
                } else {
                    1
                }
            })
            .collect();
        kernels.push(kernel);
        let pool: Vec<bool> = (0..dim).map(|a| sp[a] < 2.0 * min_sp && size[a] >= MIN_POOL_SIZE).collect();
        if !pool.contains(&true) {
            break;
        }
        strides.push(pool.iter().map(|&p| if p { 2 } else { 1 }).collect());
        for a in (0..dim).filter(|&a| pool[a]) {
            size[a] /= 2.0;
            sp[a] *= 2.0;
            pools[a] += 1;
        }
    }
    let features_per_stage = (0..kernels.len()).map(|s| features_at(s, dim)).collect();
    Ok(TopologySpec { dim, kernel_sizes: kernels, strides, features_per_stage, pools_per_axis: pools })
}

/// Round every extent up to the next multiple of `2^pools[axis]`.
pub fn pad_for_pooling(patch: &[f64], pools: &[u32]) -> Vec<usize> {
    patch
        .iter()
        .zip(pools)
        .map(|(&p, &n)| {
            let d = (1u64 << n) as f64;
            ((p / d).ceil() * d) as usize
        })
        .collect()
}
