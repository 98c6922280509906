//! Perturbations of the low-resolution segmentation fed to the second
//! stage of the cascade. Masks are one-hot: channel `c` marks class `c`,
//! channel 0 is background.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::morphology::{close, connected_components, dilate, erode, open};
use crate::rng::RngStream;

pub const P_MORPH: f64 = 0.4;
pub const RADIUS_RANGE: (f64, f64) = (1.0, 8.0);
pub const P_COMPONENT_REMOVAL: f64 = 0.2;
/// Components below this fraction of the patch volume are removed.
pub const COMPONENT_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphOp {
    Dilate,
    Erode,
    Open,
    Close,
}

impl MorphOp {
    pub const ALL: [MorphOp; 4] = [MorphOp::Dilate, MorphOp::Erode, MorphOp::Open, MorphOp::Close];

    fn apply(self, mask: &Grid<bool>, r: f64) -> Grid<bool> {
        match self {
            MorphOp::Dilate => dilate(mask, r),
            MorphOp::Erode => erode(mask, r),
            MorphOp::Open => open(mask, r),
            MorphOp::Close => close(mask, r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeMaskParams {
    /// Operator and ball radius, when triggered.
    pub morph: Option<(MorphOp, f64)>,
    /// Foreground classes in the order the operator visits them.
    pub label_order: Vec<u16>,
    pub remove_components: bool,
}

pub fn sample_cascade_params(rng: &mut RngStream, n_classes: usize) -> CascadeMaskParams {
    let morph = rng.bernoulli(P_MORPH).then(|| {
        let op = MorphOp::ALL[rng.index(MorphOp::ALL.len())];
        (op, rng.uniform(RADIUS_RANGE.0, RADIUS_RANGE.1))
    });
    let mut label_order: Vec<u16> = (1..n_classes as u16).collect();
    rng.shuffle(&mut label_order);
    let remove_components = rng.bernoulli(P_COMPONENT_REMOVAL);
    CascadeMaskParams { morph, label_order, remove_components }
}

fn to_label_map(onehot: &[Grid<u8>]) -> Result<Grid<u16>> {
    let first = onehot.first().ok_or(Error::NotOneHot)?;
    if onehot.iter().any(|g| g.shape() != first.shape()) {
        return Err(Error::NotOneHot);
    }
    let mut out = Vec::with_capacity(first.len());
    for i in 0..first.len() {
        let mut hit = None;
        for (c, g) in onehot.iter().enumerate() {
            match (g.data()[i], hit) {
                (0, _) => {}
                (1, None) => hit = Some(c as u16),
                _ => return Err(Error::NotOneHot),
            }
        }
        out.push(hit.ok_or(Error::NotOneHot)?);
    }
    Grid::new(first.shape().to_vec(), out)
}

fn to_onehot(map: &Grid<u16>, n_classes: usize) -> Vec<Grid<u8>> {
    (0..n_classes as u16).map(|c| map.map(|v| u8::from(v == c))).collect()
}

/// Apply sampled perturbations. Growing a class overwrites whatever it
/// covers; shrinking hands voxels to background.
pub fn apply_cascade_mask_transform(onehot: &[Grid<u8>], params: &CascadeMaskParams) -> Result<Vec<Grid<u8>>> {
    let mut map = to_label_map(onehot)?;
    let n_classes = onehot.len();
    if let Some((op, r)) = params.morph {
        for &label in &params.label_order {
            let mask = map.map(|v| v == label);
            let changed = op.apply(&mask, r);
            for ((v, &was), &now) in map.data_mut().iter_mut().zip(mask.data()).zip(changed.data()) {
                if now {
                    *v = label;
                } else if was {
                    *v = 0;
                }
            }
        }
    }
    if params.remove_components {
        let min_size = COMPONENT_FRACTION * map.len() as f64;
        for label in 1..n_classes as u16 {
            let comps = connected_components(&map.map(|v| v == label));
            for (v, &id) in map.data_mut().iter_mut().zip(comps.labels.data()) {
                if id > 0 && (comps.sizes[id as usize - 1] as f64) < min_size {
                    *v = 0;
                }
            }
        }
    }
    Ok(to_onehot(&map, n_classes))
}

/// Sample and apply in one step.
pub fn cascade_mask_transform(onehot: &[Grid<u8>], rng: &mut RngStream) -> Result<(Vec<Grid<u8>>, CascadeMaskParams)> {
    to_label_map(onehot)?;
    let params = sample_cascade_params(rng, onehot.len());
    Ok((apply_cascade_mask_transform(onehot, &params)?, params))
}
