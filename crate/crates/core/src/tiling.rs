//! Sliding-window inference assembly.
//!
//! Windows of the training patch size overlap by half a patch. Window
//! predictions are blended with a Gaussian importance map that favours
//! window centres, optionally averaged over all mirrorings of the input,
//! and several configurations can be ensembled by averaging probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{for_each_index, strides_of, Grid};
use crate::volume_io::{LabelVolume, NativeData};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingPlan {
    pub shape: Vec<usize>,
    pub patch: Vec<usize>,
    /// Window corners in row-major order.
    pub origins: Vec<Vec<usize>>,
}

impl TilingPlan {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

/// Origins along one axis: multiples of `ceil(p / 2)` up to `n − p`, plus
/// `n − p` itself.
pub fn axis_origins(n: usize, p: usize) -> Vec<usize> {
    let step = p.div_ceil(2);
    let last = n - p;
    let mut out: Vec<usize> = (0..=last).step_by(step.max(1)).collect();
    out.push(last);
    out.dedup();
    out
}

pub fn compute_tile_origins(shape: &[usize], patch: &[usize]) -> Result<TilingPlan> {
    let too_big = || Error::PatchLargerThanVolume { shape: shape.to_vec(), patch: patch.to_vec() };
    if shape.len() != patch.len() || patch.contains(&0) {
        return Err(too_big());
    }
    if shape.iter().zip(patch).any(|(n, p)| p > n) {
        return Err(too_big());
    }
    let per_axis: Vec<Vec<usize>> = shape.iter().zip(patch).map(|(&n, &p)| axis_origins(n, p)).collect();
    let counts: Vec<usize> = per_axis.iter().map(Vec::len).collect();
    let mut origins = Vec::new();
    for_each_index(&counts, |idx, _| origins.push(idx.iter().zip(&per_axis).map(|(&i, o)| o[i]).collect()));
    Ok(TilingPlan { shape: shape.to_vec(), patch: patch.to_vec(), origins })
}

/// Shape of the importance map. `floor` is relative to the peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSettings {
    /// σ along an axis as a fraction of the patch edge.
    pub sigma_scale: f64,
    pub floor: f64,
}

impl Default for GaussianSettings {
    fn default() -> Self {
        Self { sigma_scale: 1.0 / 8.0, floor: 1e-4 }
    }
}

pub fn gaussian_importance_map(patch: &[usize]) -> Grid<f64> {
    gaussian_importance_map_with(patch, GaussianSettings::default())
}

/// Separable Gaussian centred at `(p − 1) / 2` on every axis, peak 1,
/// floored at `settings.floor`.
pub fn gaussian_importance_map_with(patch: &[usize], settings: GaussianSettings) -> Grid<f64> {
    let profiles: Vec<Vec<f64>> = patch
        .iter()
        .map(|&p| {
            let c = (p as f64 - 1.0) / 2.0;
            let sigma = p as f64 * settings.sigma_scale;
            (0..p).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect()
        })
        .collect();
    let raw = Grid::from_fn(patch.to_vec(), |idx| idx.iter().zip(&profiles).map(|(&i, w)| w[i]).product::<f64>());
    let peak = raw.data().iter().cloned().fold(0.0, f64::max);
    raw.map(|v| (v / peak).max(settings.floor))
}

/// Weighted running sums for one volume. Addition commutes, so the result
/// does not depend on window order.
#[derive(Debug, Clone)]
pub struct TileAccumulator {
    shape: Vec<usize>,
    n_classes: usize,
    sum: Vec<f64>,
    weight: Vec<f64>,
}

impl TileAccumulator {
    pub fn new(shape: &[usize], n_classes: usize) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), n_classes, sum: vec![0.0; n * n_classes], weight: vec![0.0; n] }
    }

    /// Add a `[classes, patch…]` block at `origin`.
    pub fn add(&mut self, origin: &[usize], block: &Grid<f32>, weights: &Grid<f64>) -> Result<()> {
        let patch = weights.shape();
        let mut expect = vec![self.n_classes];
        expect.extend_from_slice(patch);
        if block.shape() != expect.as_slice() || origin.len() != self.shape.len() {
            return Err(Error::ShapeMismatch(format!("block {:?} vs expected {expect:?}", block.shape())));
        }
        if origin.iter().zip(patch).zip(&self.shape).any(|((o, p), n)| o + p > *n) {
            return Err(Error::ShapeMismatch(format!("window at {origin:?} of {patch:?} leaves {:?}", self.shape)));
        }
        let nvox: usize = self.shape.iter().product();
        let pvox = weights.len();
        let strides = strides_of(&self.shape);
        for_each_index(patch, |idx, flat| {
            let t: usize = idx.iter().zip(origin).zip(&strides).map(|((i, o), s)| (i + o) * s).sum();
            let w = weights.data()[flat];
            self.weight[t] += w;
            for c in 0..self.n_classes {
                self.sum[c * nvox + t] += w * block.data()[c * pvox + flat] as f64;
            }
        });
        Ok(())
    }

    /// Weighted mean per voxel; voxels no window touched become 0.
    pub fn finalize(self) -> Grid<f32> {
        let nvox = self.weight.len();
        let data = (0..self.n_classes * nvox)
            .map(|k| {
                let w = self.weight[k % nvox];
                if w > 0.0 {
                    (self.sum[k] / w) as f32
                } else {
                    0.0
                }
            })
            .collect();
        let mut shape = vec![self.n_classes];
        shape.extend_from_slice(&self.shape);
        Grid::new(shape, data).expect("consistent shape")
    }
}

/// Blend one `[classes, patch…]` block per window of `plan`.
pub fn aggregate_tiles(plan: &TilingPlan, blocks: &[Grid<f32>], weights: &Grid<f64>) -> Result<Grid<f32>> {
    if blocks.len() != plan.origins.len() {
        return Err(Error::ShapeMismatch(format!("{} blocks for {} windows", blocks.len(), plan.origins.len())));
    }
    if weights.shape() != plan.patch.as_slice() {
        return Err(Error::ShapeMismatch(format!("weights {:?} vs patch {:?}", weights.shape(), plan.patch)));
    }
    let n_classes = blocks.first().map(|b| b.shape()[0]).ok_or(Error::EmptyInput("no windows"))?;
    let mut acc = TileAccumulator::new(&plan.shape, n_classes);
    for (origin, block) in plan.origins.iter().zip(blocks) {
        acc.add(origin, block, weights)?;
    }
    Ok(acc.finalize())
}

fn flip_spatial(g: &Grid<f32>, mask: usize, d: usize) -> Grid<f32> {
    (0..d).filter(|a| mask >> a & 1 == 1).fold(g.clone(), |acc, a| acc.flip(a + 1))
}

/// Average of `unmirror(predict(mirror(window)))` over all `2^d` subsets of
/// spatial axes. `window` and the predictions carry a leading channel axis.
pub fn mirror_tta_average(
    mut predict: impl FnMut(&Grid<f32>) -> Result<Grid<f32>>,
    window: &Grid<f32>,
) -> Result<Grid<f32>> {
    let d = window.ndim() - 1;
    let mut sum: Option<(Vec<usize>, Vec<f64>)> = None;
    for mask in 0..1usize << d {
        let pred = flip_spatial(&predict(&flip_spatial(window, mask, d))?, mask, d);
        match &mut sum {
            None => sum = Some((pred.shape().to_vec(), pred.data().iter().map(|&v| v as f64).collect())),
            Some((shape, acc)) => {
                if pred.shape() != shape.as_slice() {
                    return Err(Error::ShapeMismatch(format!("prediction {:?} vs {shape:?}", pred.shape())));
                }
                acc.iter_mut().zip(pred.data()).for_each(|(a, &v)| *a += v as f64);
            }
        }
    }
    let (shape, acc) = sum.expect("at least one variant");
    let n = (1usize << d) as f64;
    Grid::new(shape, acc.into_iter().map(|v| (v / n) as f32).collect())
}

/// Full sliding-window prediction of a `[channels, spatial…]` image.
pub fn sliding_window_predict(
    image: &Grid<f32>,
    patch: &[usize],
    n_classes: usize,
    mirror: bool,
    mut predict: impl FnMut(&Grid<f32>) -> Result<Grid<f32>>,
) -> Result<Grid<f32>> {
    let spatial = &image.shape()[1..];
    let plan = compute_tile_origins(spatial, patch)?;
    let weights = gaussian_importance_map(patch);
    let mut acc = TileAccumulator::new(spatial, n_classes);
    for origin in &plan.origins {
        let mut lo = vec![0];
        lo.extend_from_slice(origin);
        let mut hi = vec![image.shape()[0]];
        hi.extend(origin.iter().zip(patch).map(|(o, p)| o + p));
        let window = image.crop(&lo, &hi);
        let block = if mirror { mirror_tta_average(&mut predict, &window)? } else { predict(&window)? };
        acc.add(origin, &block, &weights)?;
    }
    Ok(acc.finalize())
}

/// Class probabilities over a 3-D volume, class axis first.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    probs: Grid<f32>,
    spacing: [f64; 3],
}

/// Largest allowed deviation of a voxel's probability sum from 1.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-5;

impl ProbabilityVolume {
    pub fn new(probs: Grid<f32>, spacing: [f64; 3]) -> Result<Self> {
        if probs.ndim() != 4 || probs.shape()[0] < 2 {
            return Err(Error::ShapeMismatch(format!(
                "probabilities need [classes ≥ 2, z, y, x], got {:?}",
                probs.shape()
            )));
        }
        Ok(Self { probs, spacing })
    }

    pub fn probs(&self) -> &Grid<f32> {
        &self.probs
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Class count including background.
    pub fn n_classes(&self) -> usize {
        self.probs.shape()[0]
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.probs.shape();
        [s[1], s[2], s[3]]
    }

    /// Largest deviation of a per-voxel sum from 1.
    pub fn max_sum_error(&self) -> f64 {
        let n: usize = self.shape().iter().product();
        (0..n)
            .map(|i| ((0..self.n_classes()).map(|c| self.probs.data()[c * n + i] as f64).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_native(&self) -> NativeData {
        NativeData::Probability { probs: self.probs.clone(), spacing: self.spacing }
    }

    pub fn from_native(data: NativeData) -> Result<Self> {
        match data {
            NativeData::Probability { probs, spacing } => Self::new(probs, spacing),
            _ => Err(Error::Invalid("not a probability volume".into())),
        }
    }
}

/// Unweighted mean of equally shaped probability volumes.
pub fn ensemble_average(volumes: &[ProbabilityVolume]) -> Result<ProbabilityVolume> {
    let first = volumes.first().ok_or(Error::EmptyInput("no volumes to ensemble"))?;
    for v in &volumes[1..] {
        if v.probs.shape() != first.probs.shape() || v.spacing != first.spacing {
            return Err(Error::GeometryMismatch(format!(
                "{:?} at {:?} vs {:?} at {:?}",
                v.probs.shape(),
                v.spacing,
                first.probs.shape(),
                first.spacing
            )));
        }
    }
    let k = volumes.len() as f64;
    let data = (0..first.probs.len())
        .map(|i| (volumes.iter().map(|v| v.probs.data()[i] as f64).sum::<f64>() / k) as f32)
        .collect();
    ProbabilityVolume::new(Grid::new(first.probs.shape().to_vec(), data)?, first.spacing)
}

/// Most probable class per voxel; ties go to the lower class.
pub fn argmax_labels(volume: &ProbabilityVolume) -> Result<LabelVolume> {
    let n: usize = volume.shape().iter().product();
    let c = volume.n_classes();
    let p = volume.probs.data();
    let labels = (0..n)
        .map(|i| {
            let mut best = 0;
            for k in 1..c {
                if p[k * n + i] > p[best * n + i] {
                    best = k;
                }
            }
            best as u16
        })
        .collect();
    LabelVolume::new(volume.shape(), volume.spacing, labels, (c - 1) as u16)
}
