//! Training-time augmentation: parameter sampling separated from pure,
//! deterministic transforms, plus foreground-oversampled patch selection.
//!
//! A patch is a list of equally shaped spatial grids, one per channel
//! (2-D or 3-D). [`sample_params`] draws everything random up front, so a
//! seed and an input fully determine the output of [`augment_patch`].
//! Noise is the exception: its per-voxel draws come from the stream passed
//! to [`intensity_transform`].

mod cascade;
mod intensity;
mod sampling;
mod spatial;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::RngStream;

pub use cascade::{
    apply_cascade_mask_transform, cascade_mask_transform, sample_cascade_params, CascadeMaskParams, MorphOp,
    COMPONENT_FRACTION, P_COMPONENT_REMOVAL, P_MORPH, RADIUS_RANGE,
};
pub use intensity::{
    apply_blur, apply_contrast, apply_gamma, apply_lowres, gaussian_kernel, intensity_transform, BLUR_TRUNCATE,
};
pub use sampling::{foreground_count, sample_patch_origins, PatchSample, PatchSamples};
pub use spatial::{
    center_crop, crop_with_zero_fill, oversized_patch_size, spatial_transform, spatial_transform_labels,
};

pub const P_ROTATION: f64 = 0.2;
pub const P_SCALE: f64 = 0.2;
pub const ROTATION_ISO_3D: f64 = 30.0;
pub const ROTATION_IN_PLANE: f64 = 180.0;
pub const ROTATION_ANISO_2D: f64 = 15.0;
pub const SCALE_RANGE: (f64, f64) = (0.7, 1.4);
pub const P_NOISE: f64 = 0.15;
pub const NOISE_VARIANCE_RANGE: (f64, f64) = (0.0, 0.1);
pub const P_BLUR_SAMPLE: f64 = 0.2;
pub const P_BLUR_CHANNEL: f64 = 0.5;
pub const BLUR_SIGMA_RANGE: (f64, f64) = (0.5, 1.5);
pub const P_BRIGHTNESS: f64 = 0.15;
pub const BRIGHTNESS_RANGE: (f64, f64) = (0.7, 1.3);
pub const P_CONTRAST: f64 = 0.15;
pub const CONTRAST_RANGE: (f64, f64) = (0.65, 1.5);
pub const P_LOWRES_SAMPLE: f64 = 0.25;
pub const P_LOWRES_CHANNEL: f64 = 0.5;
pub const LOWRES_RANGE: (f64, f64) = (1.0, 2.0);
pub const P_GAMMA: f64 = 0.15;
pub const P_GAMMA_INVERTED: f64 = 0.15;
pub const GAMMA_RANGE: (f64, f64) = (0.7, 1.5);
pub const P_MIRROR: f64 = 0.5;

/// A patch is anisotropic when its largest edge is at least this many
/// times its smallest.
pub const ANISOTROPIC_PATCH_RATIO: usize = 3;

/// Training patch size. Anisotropy is derived from the sizes on demand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    patch: Vec<usize>,
}

impl PatchGeometry {
    pub fn new(patch: Vec<usize>) -> Result<Self> {
        if !(patch.len() == 2 || patch.len() == 3) || patch.contains(&0) {
            return Err(Error::Invalid(format!("patch must be 2-D or 3-D with positive edges, got {patch:?}")));
        }
        Ok(Self { patch })
    }

    pub fn patch(&self) -> &[usize] {
        &self.patch
    }

    pub fn dim(&self) -> usize {
        self.patch.len()
    }

    pub fn is_anisotropic(&self) -> bool {
        let max = *self.patch.iter().max().unwrap();
        let min = *self.patch.iter().min().unwrap();
        max >= ANISOTROPIC_PATCH_RATIO * min
    }

    /// True when rotation, scaling and low-res simulation act in a plane.
    pub fn is_planar(&self) -> bool {
        self.dim() == 2 || self.is_anisotropic()
    }

    /// The axis left alone by planar augmentation of an anisotropic 3-D
    /// patch: the shortest edge, lowest index on ties.
    pub fn out_of_plane_axis(&self) -> Option<usize> {
        if self.dim() == 3 && self.is_anisotropic() {
            let min = *self.patch.iter().min().unwrap();
            self.patch.iter().position(|&p| p == min)
        } else {
            None
        }
    }

    /// Axes touched by spatial and low-res augmentation.
    pub fn spatial_axes(&self) -> Vec<usize> {
        let skip = self.out_of_plane_axis();
        (0..self.dim()).filter(|&a| Some(a) != skip).collect()
    }

    /// Half-width of the rotation angle range, in degrees.
    pub fn rotation_range(&self) -> f64 {
        match (self.dim(), self.is_anisotropic()) {
            (3, false) => ROTATION_ISO_3D,
            (2, true) => ROTATION_ANISO_2D,
            _ => ROTATION_IN_PLANE,
        }
    }
}

/// Sampled values for one patch. `None` means the augmentation is off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationParams {
    /// Degrees. Three angles (about axes 0, 1, 2) for isotropic 3-D patches,
    /// one in-plane angle otherwise.
    pub rotation: Option<Vec<f64>>,
    pub scale: Option<f64>,
    pub noise_variance: Option<f64>,
    /// Kernel width per channel; `None` entries are left sharp.
    pub blur_sigma: Option<Vec<Option<f64>>>,
    pub brightness: Option<f64>,
    pub contrast: Option<f64>,
    /// Downsampling factor per channel.
    pub lowres_factor: Option<Vec<Option<f64>>>,
    /// Exponent applied to inverted intensities.
    pub gamma_inverted: Option<f64>,
    pub gamma: Option<f64>,
    pub mirror_axes: Vec<usize>,
}

impl AugmentationParams {
    /// Everything off.
    pub fn identity() -> Self {
        Self {
            rotation: None,
            scale: None,
            noise_variance: None,
            blur_sigma: None,
            brightness: None,
            contrast: None,
            lowres_factor: None,
            gamma_inverted: None,
            gamma: None,
            mirror_axes: Vec::new(),
        }
    }

    pub fn is_spatial(&self) -> bool {
        self.rotation.is_some() || self.scale.is_some()
    }
}

fn draw(rng: &mut RngStream, p: f64, range: (f64, f64)) -> Option<f64> {
    rng.bernoulli(p).then(|| rng.uniform(range.0, range.1))
}

fn draw_per_channel(
    rng: &mut RngStream,
    p_sample: f64,
    p_channel: f64,
    range: (f64, f64),
    channels: usize,
) -> Option<Vec<Option<f64>>> {
    rng.bernoulli(p_sample).then(|| (0..channels).map(|_| draw(rng, p_channel, range)).collect())
}

/// Draw one patch's augmentation parameters. Draw order is fixed, so equal
/// seeds give equal parameters.
pub fn sample_params(rng: &mut RngStream, geom: &PatchGeometry, channels: usize) -> AugmentationParams {
    let range = geom.rotation_range();
    let n_angles = if geom.is_planar() { 1 } else { 3 };
    let rotation = rng.bernoulli(P_ROTATION).then(|| (0..n_angles).map(|_| rng.uniform(-range, range)).collect());
    let scale = draw(rng, P_SCALE, SCALE_RANGE);
    let noise_variance = draw(rng, P_NOISE, NOISE_VARIANCE_RANGE);
    let blur_sigma = draw_per_channel(rng, P_BLUR_SAMPLE, P_BLUR_CHANNEL, BLUR_SIGMA_RANGE, channels);
    let brightness = draw(rng, P_BRIGHTNESS, BRIGHTNESS_RANGE);
    let contrast = draw(rng, P_CONTRAST, CONTRAST_RANGE);
    let lowres_factor = draw_per_channel(rng, P_LOWRES_SAMPLE, P_LOWRES_CHANNEL, LOWRES_RANGE, channels);
    let gamma_inverted = draw(rng, P_GAMMA_INVERTED, GAMMA_RANGE);
    let gamma = draw(rng, P_GAMMA, GAMMA_RANGE);
    let mirror_axes = (0..geom.dim()).filter(|_| rng.bernoulli(P_MIRROR)).collect();
    AugmentationParams {
        rotation,
        scale,
        noise_variance,
        blur_sigma,
        brightness,
        contrast,
        lowres_factor,
        gamma_inverted,
        gamma,
        mirror_axes,
    }
}

/// Reverse each grid along the listed axes.
pub fn mirror<T: Copy>(grid: &Grid<T>, axes: &[usize]) -> Grid<T> {
    axes.iter().fold(grid.clone(), |g, &a| g.flip(a))
}

/// Full pipeline on an oversized crop: spatial transform with center crop
/// to the patch size, intensity transforms, then mirroring.
pub fn augment_patch(
    channels: &[Grid<f32>],
    label: Option<&Grid<u16>>,
    params: &AugmentationParams,
    geom: &PatchGeometry,
    rng: &mut RngStream,
) -> Result<(Vec<Grid<f32>>, Option<Grid<u16>>)> {
    let spatial = spatial_transform(channels, params, geom)?;
    let label = label.map(|l| spatial_transform_labels(l, params, geom)).transpose()?;
    let intensity = intensity_transform(&spatial, params, geom, rng)?;
    let out = intensity.iter().map(|c| mirror(c, &params.mirror_axes)).collect();
    Ok((out, label.map(|l| mirror(&l, &params.mirror_axes))))
}
