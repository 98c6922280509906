use serde::{Deserialize, Serialize};

use super::topology::{configure_topology, TopologySpec};
use crate::error::{Error, Result};

/// Name of the calibrated default budget pair.
pub const REFERENCE_PRESET: &str = "reference-11g";

/// Headroom of the 3D reference budget over its anchor. Any factor in
/// `[1, 1.25)` keeps the anchor at 128³ / batch 2.
pub const REFERENCE_3D_HEADROOM: f64 = 1.19;

const ANCHOR_IO_CHANNELS: usize = 4;
const ANCHOR_3D_PATCH: [usize; 3] = [128, 128, 128];
const ANCHOR_3D_SPACING: [f64; 3] = [1.0, 0.77, 0.77];
const ANCHOR_3D_BATCH: usize = 2;
const ANCHOR_2D_PATCH: [usize; 2] = [512, 512];
const ANCHOR_2D_SPACING: [f64; 2] = [0.77, 0.77];
const ANCHOR_2D_BATCH: usize = 12;

/// Abstract activation cost of one training step.
///
/// Every non-bottleneck stage counts twice (encoder and decoder), the
/// bottleneck once, plus one map per input/output channel at full resolution:
/// `batch · (Σ_s w_s·voxels_s·features_s + io·voxels_0)`.
pub fn estimate_memory(topo: &TopologySpec, patch: &[usize], batch: usize, io_channels: usize) -> f64 {
    let mut size: Vec<f64> = patch.iter().map(|&p| p as f64).collect();
    let n = topo.strides.len();
    let mut total = 0.0;
    for s in 0..=n {
        let voxels: f64 = size.iter().product();
        let weight = if s == n { 1.0 } else { 2.0 };
        total += weight * voxels * topo.features_per_stage[s] as f64;
        if s < n {
            for (x, &st) in size.iter_mut().zip(&topo.strides[s]) {
                *x /= st as f64;
            }
        }
    }
    let full: f64 = patch.iter().map(|&p| p as f64).product();
    batch as f64 * (total + io_channels as f64 * full)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryBudget {
    pub budget_3d: f64,
    pub budget_2d: f64,
}

impl MemoryBudget {
    pub fn new(budget_3d: f64, budget_2d: f64) -> Result<Self> {
        if !(budget_3d > 0.0 && budget_3d.is_finite() && budget_2d > 0.0 && budget_2d.is_finite()) {
            return Err(Error::Invalid(format!("budgets must be positive, got 3D {budget_3d} 2D {budget_2d}")));
        }
        Ok(Self { budget_3d, budget_2d })
    }

    /// The calibrated preset: a 128³ patch at batch 2 (3D) and a 512² patch at
    /// batch 12 (2D) for a single-channel, three-output CT dataset.
    pub fn reference() -> Self {
        let anchor = |patch: &[usize], spacing: &[f64], batch: usize| {
            let p: Vec<f64> = patch.iter().map(|&x| x as f64).collect();
            let topo = configure_topology(&p, spacing).expect("anchor topology");
            estimate_memory(&topo, patch, batch, ANCHOR_IO_CHANNELS)
        };
        Self {
            budget_3d: REFERENCE_3D_HEADROOM * anchor(&ANCHOR_3D_PATCH, &ANCHOR_3D_SPACING, ANCHOR_3D_BATCH),
            budget_2d: anchor(&ANCHOR_2D_PATCH, &ANCHOR_2D_SPACING, ANCHOR_2D_BATCH),
        }
    }

    pub fn for_dim(&self, dim: usize) -> f64 {
        if dim == 3 {
            self.budget_3d
        } else {
            self.budget_2d
        }
    }
}
