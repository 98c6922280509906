use serde::{Deserialize, Serialize};

use super::{case_dice, check_geometry, mean_foreground_dice};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::morphology::connected_components;
use crate::volume_io::LabelVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentScope {
    /// All foreground classes merged into one mask.
    AllForeground,
    Class(u16),
}

/// Keep only the largest connected component of the scope's mask (full
/// connectivity). Equal sizes keep the component whose first voxel comes
/// first in raster order.
pub fn largest_component_filter(labels: &LabelVolume, scope: ComponentScope) -> LabelVolume {
    let in_scope = |v: u16| match scope {
        ComponentScope::AllForeground => v > 0,
        ComponentScope::Class(c) => v == c,
    };
    let mask = labels.grid().map(in_scope);
    let comps = connected_components(&mask);
    let Some(keep) = comps.largest() else {
        return labels.clone();
    };
    let keep = keep as u32 + 1;
    let data = labels
        .data()
        .iter()
        .zip(comps.labels.data())
        .map(|(&v, &id)| if id != 0 && id != keep { 0 } else { v })
        .collect();
    LabelVolume::from_grid(
        Grid::new(labels.shape().to_vec(), data).expect("same shape"),
        labels.spacing(),
        labels.num_classes(),
    )
    .expect("labels unchanged in range")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostprocessingDecision {
    pub all_foreground_as_one: bool,
    /// Whether to filter class `k + 1`.
    pub per_class: Vec<bool>,
}

impl PostprocessingDecision {
    pub fn none(num_classes: u16) -> Self {
        Self { all_foreground_as_one: false, per_class: vec![false; num_classes as usize] }
    }
}

pub fn apply_postprocessing(labels: &LabelVolume, decision: &PostprocessingDecision) -> LabelVolume {
    let mut out = if decision.all_foreground_as_one {
        largest_component_filter(labels, ComponentScope::AllForeground)
    } else {
        labels.clone()
    };
    for (k, &on) in decision.per_class.iter().enumerate() {
        if on {
            out = largest_component_filter(&out, ComponentScope::Class(k as u16 + 1));
        }
    }
    out
}

struct Scores {
    per_case: Vec<Vec<f64>>,
}

impl Scores {
    fn of(preds: &[LabelVolume], refs: &[LabelVolume], num_classes: u16) -> Result<Self> {
        let per_case = preds.iter().zip(refs).map(|(p, r)| case_dice(p, r, num_classes)).collect::<Result<_>>()?;
        Ok(Self { per_case })
    }

    fn mean(&self) -> f64 {
        mean_foreground_dice(&self.per_case).expect("non-empty")
    }

    fn class_mean(&self, k: usize) -> f64 {
        self.per_case.iter().map(|v| v[k]).sum::<f64>() / self.per_case.len() as f64
    }
}

/// Step 1 merges all foreground classes and is kept only if the mean
/// foreground Dice strictly improves with no class getting worse. Step 2
/// then tries each class on top of that outcome and keeps it if that class
/// strictly improves.
pub fn decide_postprocessing(
    preds: &[LabelVolume],
    refs: &[LabelVolume],
    num_classes: u16,
) -> Result<PostprocessingDecision> {
    if preds.is_empty() || num_classes == 0 {
        return Err(Error::EmptyInput("no cross-validation predictions"));
    }
    if preds.len() != refs.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions for {} references", preds.len(), refs.len())));
    }
    for (p, r) in preds.iter().zip(refs) {
        check_geometry(p, r)?;
    }
    let mut decision = PostprocessingDecision::none(num_classes);
    let mut current: Vec<LabelVolume> = preds.to_vec();
    let mut base = Scores::of(&current, refs, num_classes)?;

    let merged: Vec<LabelVolume> =
        current.iter().map(|p| largest_component_filter(p, ComponentScope::AllForeground)).collect();
    let after = Scores::of(&merged, refs, num_classes)?;
    let no_class_worse = (0..num_classes as usize).all(|k| after.class_mean(k) >= base.class_mean(k));
    if after.mean() > base.mean() && no_class_worse {
        decision.all_foreground_as_one = true;
        current = merged;
        base = after;
    }

    for k in 0..num_classes as usize {
        let scope = ComponentScope::Class(k as u16 + 1);
        let filtered: Vec<LabelVolume> = current.iter().map(|p| largest_component_filter(p, scope)).collect();
        let after = Scores::of(&filtered, refs, num_classes)?;
        if after.class_mean(k) > base.class_mean(k) {
            decision.per_class[k] = true;
            current = filtered;
            base = after;
        }
    }
    Ok(decision)
}
