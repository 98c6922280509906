use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed training constants shared by every configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlueprintParams {
    pub epochs: u32,
    pub iters_per_epoch: u32,
    pub lr0: f64,
    pub poly_exponent: f64,
    pub momentum: f64,
    pub leaky_slope: f64,
    pub base_features: u32,
    pub feature_cap_3d: u32,
    pub feature_cap_2d: u32,
    pub min_batch: usize,
    pub fg_oversample_fraction: f64,
    pub loss: String,
    pub deep_supervision: String,
}

impl Default for BlueprintParams {
    fn default() -> Self {
        Self {
            epochs: 1000,
            iters_per_epoch: 250,
            lr0: 0.01,
            poly_exponent: 0.9,
            momentum: 0.99,
            leaky_slope: 0.01,
            base_features: super::topology::BASE_FEATURES,
            feature_cap_3d: super::topology::FEATURE_CAP_3D,
            feature_cap_2d: super::topology::FEATURE_CAP_2D,
            min_batch: super::plan::MIN_BATCH,
            fg_oversample_fraction: 1.0 / 3.0,
            loss: "CE+Dice".into(),
            deep_supervision: "all but the two lowest resolutions".into(),
        }
    }
}

/// `lr0 · (1 − epoch/epoch_max)^0.9`.
pub fn poly_lr(epoch: u32, epoch_max: u32, lr0: f64) -> Result<f64> {
    if epoch_max == 0 || epoch > epoch_max {
        return Err(Error::Invalid(format!("epoch {epoch} outside [0, {epoch_max}]")));
    }
    Ok(lr0 * (1.0 - epoch as f64 / epoch_max as f64).powf(0.9))
}

/// Loss weights for the `n − 2` highest-resolution outputs, halving per
/// level and normalized to sum 1.
pub fn deep_supervision_weights(n_resolutions: usize) -> Result<Vec<f64>> {
    if n_resolutions < 3 {
        return Err(Error::TooFewResolutions(n_resolutions));
    }
    let raw: Vec<f64> = (0..n_resolutions - 2).map(|i| 0.5f64.powi(i as i32)).collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}
