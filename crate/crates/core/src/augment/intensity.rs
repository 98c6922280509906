use super::{AugmentationParams, PatchGeometry};
use crate::error::{Error, Result};
use crate::grid::{map_lines, Grid};
use crate::preprocess::{resample_line, Interp};
use crate::rng::RngStream;

/// Blur kernels are cut at this many standard deviations.
pub const BLUR_TRUNCATE: f64 = 4.0;

/// Normalized Gaussian kernel of width `sigma`, radius `ceil(4σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (BLUR_TRUNCATE * sigma).ceil() as i64;
    let w: Vec<f64> = (-r..=r).map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Index into `0..n` with half-sample symmetric reflection (`d c b a | a b c d`).
fn reflect(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    i = i.rem_euclid(period);
    (if i >= n { period - 1 - i } else { i }) as usize
}

fn convolve_line(line: &[f64], out: &mut [f64], kernel: &[f64]) {
    let r = (kernel.len() / 2) as i64;
    for (q, o) in out.iter_mut().enumerate() {
        *o = kernel.iter().enumerate().map(|(k, w)| w * line[reflect(q as i64 + k as i64 - r, line.len())]).sum();
    }
}

/// Separable Gaussian blur along every axis.
pub fn apply_blur(shape: &[usize], data: &[f64], sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let mut cur = data.to_vec();
    for a in 0..shape.len() {
        cur = map_lines(shape, &cur, a, shape[a], |l, o| convolve_line(l, o, &kernel)).1;
    }
    cur
}

fn min_max(data: &[f64]) -> (f64, f64) {
    data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Multiply, then clip to the pre-multiplication value range.
pub fn apply_contrast(data: &mut [f64], factor: f64) {
    let (lo, hi) = min_max(data);
    for v in data.iter_mut() {
        *v = (*v * factor).clamp(lo, hi);
    }
}

/// Nearest-neighbour downsampling by `factor` along `axes`, then cubic
/// upsampling back to the original size.
pub fn apply_lowres(shape: &[usize], data: &[f64], axes: &[usize], factor: f64) -> Vec<f64> {
    let mut cur_shape = shape.to_vec();
    let mut cur = data.to_vec();
    for &a in axes {
        let n = shape[a];
        let m = ((n as f64 / factor + 0.5).floor() as usize).max(1);
        let (s, d) =
            map_lines(&cur_shape, &cur, a, m, |l, o| resample_line(l, o, n as f64 / m as f64, Interp::Nearest));
        cur_shape = s;
        cur = d;
    }
    for &a in axes {
        let n = shape[a];
        let m = cur_shape[a];
        let (s, d) =
            map_lines(&cur_shape, &cur, a, n, |l, o| resample_line(l, o, m as f64 / n as f64, Interp::Spline3));
        cur_shape = s;
        cur = d;
    }
    cur
}

/// Rescale to [0, 1] of the value range, raise to `gamma` (on `1 − x` when
/// `inverted`), scale back. Constant data is returned unchanged.
pub fn apply_gamma(data: &mut [f64], gamma: f64, inverted: bool) {
    let (lo, hi) = min_max(data);
    let range = hi - lo;
    if !(range > 0.0) {
        return;
    }
    for v in data.iter_mut() {
        let x = (*v - lo) / range;
        let y = if inverted { 1.0 - (1.0 - x).powf(gamma) } else { x.powf(gamma) };
        *v = y * range + lo;
    }
}

/// Noise, blur, brightness, contrast, low resolution and gamma, in that
/// order. `rng` supplies the per-voxel noise.
pub fn intensity_transform(
    channels: &[Grid<f32>],
    params: &AugmentationParams,
    geom: &PatchGeometry,
    rng: &mut RngStream,
) -> Result<Vec<Grid<f32>>> {
    let per_channel = |v: &Option<Vec<Option<f64>>>| -> Result<()> {
        match v {
            Some(list) if list.len() != channels.len() => Err(Error::InconsistentChannels(format!(
                "parameters for {} channels, patch has {}",
                list.len(),
                channels.len()
            ))),
            _ => Ok(()),
        }
    };
    per_channel(&params.blur_sigma)?;
    per_channel(&params.lowres_factor)?;
    let nth = |v: &Option<Vec<Option<f64>>>, c: usize| v.as_ref().and_then(|l| l[c]);
    let axes = geom.spatial_axes();

    channels
        .iter()
        .enumerate()
        .map(|(c, grid)| {
            let shape = grid.shape();
            let mut x: Vec<f64> = grid.data().iter().map(|&v| v as f64).collect();
            if let Some(var) = params.noise_variance {
                let std = var.sqrt();
                for v in x.iter_mut() {
                    *v += rng.normal(0.0, std);
                }
            }
            if let Some(sigma) = nth(&params.blur_sigma, c) {
                x = apply_blur(shape, &x, sigma);
            }
            if let Some(b) = params.brightness {
                x.iter_mut().for_each(|v| *v *= b);
            }
            if let Some(f) = params.contrast {
                apply_contrast(&mut x, f);
            }
            if let Some(f) = nth(&params.lowres_factor, c) {
                x = apply_lowres(shape, &x, &axes, f);
            }
            if let Some(g) = params.gamma_inverted {
                apply_gamma(&mut x, g, true);
            }
            if let Some(g) = params.gamma {
                apply_gamma(&mut x, g, false);
            }
            Grid::new(shape.to_vec(), x.into_iter().map(|v| v as f32).collect())
        })
        .collect()
}
