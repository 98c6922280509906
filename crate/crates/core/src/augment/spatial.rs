use super::{AugmentationParams, PatchGeometry, SCALE_RANGE};
use crate::error::{Error, Result};
use crate::grid::{for_each_index, Grid};

const EDGE_TOLERANCE: f64 = 1e-9;

/// Oversized crop that holds every source coordinate of any rotation
/// combined with the smallest scale: the circumscribed diagonal of the
/// rotated axes divided by the minimum scale. Margins are kept even so the
/// center crop is integral.
pub fn oversized_patch_size(geom: &PatchGeometry) -> Vec<usize> {
    let axes = geom.spatial_axes();
    let half_diag = axes.iter().map(|&a| ((geom.patch()[a] as f64 - 1.0) / 2.0).powi(2)).sum::<f64>().sqrt();
    let span = (2.0 * half_diag / SCALE_RANGE.0 - EDGE_TOLERANCE).ceil() as usize + 1;
    geom.patch()
        .iter()
        .enumerate()
        .map(|(a, &p)| if axes.contains(&a) { even_margin(p, span.max(p)) } else { p })
        .collect()
}

fn even_margin(p: usize, n: usize) -> usize {
    n + (n - p) % 2
}

/// Crop `size` voxels starting at `origin` (may be negative or run past the
/// end); voxels outside the grid are `fill`.
pub fn crop_with_zero_fill<T: Copy>(grid: &Grid<T>, origin: &[i64], size: &[usize], fill: T) -> Grid<T> {
    let shape = grid.shape();
    let mut src = vec![0usize; shape.len()];
    Grid::from_fn(size.to_vec(), |idx| {
        for a in 0..idx.len() {
            let c = origin[a] + idx[a] as i64;
            if c < 0 || c >= shape[a] as i64 {
                return fill;
            }
            src[a] = c as usize;
        }
        grid.get(&src)
    })
}

/// Integral center crop to `patch`.
pub fn center_crop<T: Copy>(grid: &Grid<T>, patch: &[usize]) -> Result<Grid<T>> {
    check_fits(grid.shape(), patch)?;
    let lo: Vec<usize> = grid.shape().iter().zip(patch).map(|(n, p)| (n - p) / 2).collect();
    let hi: Vec<usize> = lo.iter().zip(patch).map(|(l, p)| l + p).collect();
    Ok(grid.crop(&lo, &hi))
}

fn check_fits(shape: &[usize], patch: &[usize]) -> Result<()> {
    if shape.len() != patch.len() || shape.iter().zip(patch).any(|(n, p)| n < p) {
        return Err(Error::MarginTooSmall { needed: patch.to_vec(), got: shape.to_vec() });
    }
    Ok(())
}

/// Row-major d×d matrix mapping output offsets to source offsets.
struct InverseMap {
    m: Vec<f64>,
    d: usize,
}

impl InverseMap {
    fn new(params: &AugmentationParams, geom: &PatchGeometry) -> Self {
        let d = geom.dim();
        let mut m = identity(d);
        if let Some(angles) = &params.rotation {
            let rot = if angles.len() == 1 {
                let ax = geom.spatial_axes();
                plane_rotation(d, ax[0], ax[1], angles[0])
            } else {
                // R = R0 · R1 · R2, each about one axis
                (0..3).map(|k| about_axis(k, angles[k])).fold(identity(3), |acc, r| matmul(&acc, &r, 3))
            };
            m = transpose(&rot, d);
        }
        if let Some(s) = params.scale {
            for &a in &geom.spatial_axes() {
                for j in 0..d {
                    m[a * d + j] /= s;
                }
            }
        }
        Self { m, d }
    }

    fn apply(&self, offset: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..self.d).map(|j| self.m[i * self.d + j] * offset[j]).sum();
        }
    }
}

fn identity(d: usize) -> Vec<f64> {
    (0..d * d).map(|k| if k / d == k % d { 1.0 } else { 0.0 }).collect()
}

fn plane_rotation(d: usize, i: usize, j: usize, deg: f64) -> Vec<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    let mut r = identity(d);
    r[i * d + i] = c;
    r[i * d + j] = -s;
    r[j * d + i] = s;
    r[j * d + j] = c;
    r
}

fn about_axis(k: usize, deg: f64) -> Vec<f64> {
    let others: Vec<usize> = (0..3).filter(|&a| a != k).collect();
    plane_rotation(3, others[0], others[1], deg)
}

fn matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    (0..d * d).map(|k| (0..d).map(|t| a[(k / d) * d + t] * b[t * d + k % d]).sum()).collect()
}

fn transpose(a: &[f64], d: usize) -> Vec<f64> {
    (0..d * d).map(|k| a[(k % d) * d + k / d]).collect()
}

/// Source-coordinate frame for an input of `shape` and output of `patch`.
struct Frame {
    map: InverseMap,
    c_in: Vec<f64>,
    c_out: Vec<f64>,
}

impl Frame {
    fn new(shape: &[usize], params: &AugmentationParams, geom: &PatchGeometry) -> Result<Self> {
        let patch = geom.patch();
        check_fits(shape, patch)?;
        let c_out: Vec<f64> = patch.iter().map(|&p| (p as f64 - 1.0) / 2.0).collect();
        let c_in: Vec<f64> = shape.iter().zip(patch).zip(&c_out).map(|((n, p), c)| ((n - p) / 2) as f64 + c).collect();
        let frame = Self { map: InverseMap::new(params, geom), c_in, c_out };
        frame.check_margin(shape, patch)?;
        Ok(frame)
    }

    fn source(&self, idx: &[usize], off: &mut [f64], out: &mut [f64]) {
        for a in 0..idx.len() {
            off[a] = idx[a] as f64 - self.c_out[a];
        }
        self.map.apply(off, out);
        for a in 0..idx.len() {
            out[a] += self.c_in[a];
        }
    }

    /// The map is affine, so the output corners bound the source region.
    fn check_margin(&self, shape: &[usize], patch: &[usize]) -> Result<()> {
        let d = patch.len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let (mut off, mut src) = (vec![0.0; d], vec![0.0; d]);
        for corner in 0..1usize << d {
            let idx: Vec<usize> = (0..d).map(|a| if corner >> a & 1 == 1 { patch[a] - 1 } else { 0 }).collect();
            self.source(&idx, &mut off, &mut src);
            for a in 0..d {
                lo[a] = lo[a].min(src[a]);
                hi[a] = hi[a].max(src[a]);
            }
        }
        let outside = (0..d).any(|a| lo[a] < -EDGE_TOLERANCE || hi[a] > shape[a] as f64 - 1.0 + EDGE_TOLERANCE);
        if outside {
            let needed = (0..d)
                .map(|a| {
                    let reach = (self.c_in[a] - lo[a]).max(hi[a] - self.c_in[a]) - self.c_out[a];
                    let n = patch[a] + 2 * (reach - EDGE_TOLERANCE).ceil().max(0.0) as usize;
                    n.max(shape[a])
                })
                .collect();
            return Err(Error::MarginTooSmall { needed, got: shape.to_vec() });
        }
        Ok(())
    }
}

fn multilinear(g: &Grid<f32>, x: &[f64]) -> f32 {
    let d = x.len();
    let shape = g.shape();
    let base: Vec<i64> = x.iter().map(|v| v.floor() as i64).collect();
    let mut acc = 0.0f64;
    let mut idx = vec![0usize; d];
    'corner: for corner in 0..1usize << d {
        let mut w = 1.0;
        for a in 0..d {
            let hi = corner >> a & 1 == 1;
            let t = x[a] - base[a] as f64;
            let wa = if hi { t } else { 1.0 - t };
            if wa == 0.0 {
                continue 'corner;
            }
            let c = base[a] + hi as i64;
            if c < 0 || c >= shape[a] as i64 {
                // out-of-boundary value 0
                continue 'corner;
            }
            idx[a] = c as usize;
            w *= wa;
        }
        acc += w * g.get(&idx) as f64;
    }
    acc as f32
}

/// Rotation and scaling as one inverse coordinate map with a single
/// multilinear interpolation, followed by a center crop to the patch size.
/// Without rotation or scaling this is an exact center crop.
pub fn spatial_transform(
    channels: &[Grid<f32>],
    params: &AugmentationParams,
    geom: &PatchGeometry,
) -> Result<Vec<Grid<f32>>> {
    if !params.is_spatial() {
        return channels.iter().map(|c| center_crop(c, geom.patch())).collect();
    }
    channels
        .iter()
        .map(|c| {
            let frame = Frame::new(c.shape(), params, geom)?;
            let d = geom.dim();
            let (mut off, mut src) = (vec![0.0; d], vec![0.0; d]);
            let mut data = Vec::with_capacity(geom.patch().iter().product());
            for_each_index(geom.patch(), |idx, _| {
                frame.source(idx, &mut off, &mut src);
                data.push(multilinear(c, &src));
            });
            Grid::new(geom.patch().to_vec(), data)
        })
        .collect()
}

/// Same coordinate map for a label grid, with nearest-neighbour lookup.
pub fn spatial_transform_labels(
    label: &Grid<u16>,
    params: &AugmentationParams,
    geom: &PatchGeometry,
) -> Result<Grid<u16>> {
    if !params.is_spatial() {
        return center_crop(label, geom.patch());
    }
    let frame = Frame::new(label.shape(), params, geom)?;
    let d = geom.dim();
    let shape = label.shape();
    let (mut off, mut src) = (vec![0.0; d], vec![0.0; d]);
    let mut near = vec![0usize; d];
    let mut data = Vec::with_capacity(geom.patch().iter().product());
    for_each_index(geom.patch(), |idx, _| {
        frame.source(idx, &mut off, &mut src);
        let mut inside = true;
        for a in 0..d {
            let c = (src[a] + 0.5).floor() as i64;
            inside &= c >= 0 && c < shape[a] as i64;
            near[a] = c.max(0) as usize;
        }
        data.push(if inside { label.get(&near) } else { 0 });
    });
    Grid::new(geom.patch().to_vec(), data)
}
