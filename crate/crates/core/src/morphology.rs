//! Binary morphology on N-d grids: exact Euclidean distance transforms,
//! ball-shaped dilation/erosion and connected components.

use std::collections::VecDeque;

use crate::grid::{map_lines, Grid};

/// Squared Euclidean distance (in voxels) from every voxel to the nearest
/// `true` voxel. `f64::INFINITY` everywhere if the mask is empty.
pub fn distance_sq(mask: &Grid<bool>) -> Grid<f64> {
    let shape = mask.shape().to_vec();
    let mut cur: Vec<f64> = mask.data().iter().map(|&m| if m { 0.0 } else { f64::INFINITY }).collect();
    for axis in 0..shape.len() {
        let n = shape[axis];
        cur = map_lines(&shape, &cur, axis, n, lower_envelope).1;
    }
    Grid::new(shape, cur).expect("shape preserved")
}

/// One pass of the separable squared distance transform (Felzenszwalb and
/// Huttenlocher): `out[q] = min_p (q − p)² + f[p]`.
fn lower_envelope(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let sites: Vec<usize> = (0..n).filter(|&p| f[p].is_finite()).collect();
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    let cross =
        |p: usize, q: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
    for &q in &sites {
        while let Some(&p) = v.last() {
            if cross(p, q) <= z[z.len() - 1] {
                v.pop();
                z.pop();
            } else {
                break;
            }
        }
        z.push(if v.is_empty() { f64::NEG_INFINITY } else { cross(*v.last().unwrap(), q) });
        v.push(q);
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Dilation by a ball of radius `r` voxels.
pub fn dilate(mask: &Grid<bool>, r: f64) -> Grid<bool> {
    distance_sq(mask).map(|d| d <= r * r)
}

/// Erosion by a ball of radius `r`. Voxels outside the grid do not erode.
pub fn erode(mask: &Grid<bool>, r: f64) -> Grid<bool> {
    let d = distance_sq(&mask.map(|m| !m));
    Grid::new(mask.shape().to_vec(), mask.data().iter().zip(d.data()).map(|(&m, &d)| m && d > r * r).collect())
        .expect("shape preserved")
}

pub fn open(mask: &Grid<bool>, r: f64) -> Grid<bool> {
    dilate(&erode(mask, r), r)
}

pub fn close(mask: &Grid<bool>, r: f64) -> Grid<bool> {
    erode(&dilate(mask, r), r)
}

/// Connected components under full connectivity (26 in 3-D, 8 in 2-D).
#[derive(Debug, Clone)]
pub struct Components {
    /// Component id + 1 per voxel, 0 for background.
    pub labels: Grid<u32>,
    /// Voxel count per component, indexed by id.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Id of the largest component; on ties the one found first in raster
    /// order (smallest lexicographic first voxel).
    pub fn largest(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|b| s > self.sizes[b]) {
                best = Some(i);
            }
        }
        best
    }
}

fn neighbour_offsets(ndim: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..ndim {
        out = out.into_iter().flat_map(|o| (-1..=1).map(move |d| [o.clone(), vec![d]].concat())).collect();
    }
    out.retain(|o| o.iter().any(|&d| d != 0));
    out
}

/// Label connected components; ids follow the raster order of each
/// component's first voxel.
pub fn connected_components(mask: &Grid<bool>) -> Components {
    let shape = mask.shape().to_vec();
    let strides = mask.strides();
    let offsets = neighbour_offsets(shape.len());
    let mut labels = vec![0u32; mask.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    let mut idx = vec![0usize; shape.len()];
    for start in 0..mask.len() {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(flat) = queue.pop_front() {
            size += 1;
            let mut rem = flat;
            for a in 0..shape.len() {
                idx[a] = rem / strides[a];
                rem %= strides[a];
            }
            'next: for off in &offsets {
                let mut nb = 0usize;
                for a in 0..shape.len() {
                    let c = idx[a] as i64 + off[a];
                    if c < 0 || c >= shape[a] as i64 {
                        continue 'next;
                    }
                    nb += c as usize * strides[a];
                }
                if mask.data()[nb] && labels[nb] == 0 {
                    labels[nb] = id;
                    queue.push_back(nb);
                }
            }
        }
        sizes.push(size);
    }
    Components { labels: Grid::new(shape, labels).expect("shape preserved"), sizes }
}
