//! Cross-validation driven choices: Dice evaluation, configuration and
//! ensemble selection, largest-component postprocessing and bootstrap
//! rank stability.
//!
//! "Mean foreground Dice" pools every (case, foreground class) pair into a
//! single unweighted mean.

mod bootstrap;
mod postprocess;
mod select;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume_io::LabelVolume;

pub use bootstrap::{
    average_ranks, bootstrap_ranking, exact_rank_distribution, rank_slot, RankDistribution, DEFAULT_REPLICATES,
};
pub use postprocess::{
    apply_postprocessing, decide_postprocessing, largest_component_filter, ComponentScope, PostprocessingDecision,
};
pub use select::{select_configuration, Candidate};

const SPACING_TOLERANCE: f64 = 1e-6;

fn check_geometry(a: &LabelVolume, b: &LabelVolume) -> Result<()> {
    let spacing_ok = a.spacing().iter().zip(b.spacing()).all(|(x, y)| ((x - y) / y).abs() <= SPACING_TOLERANCE);
    if a.shape() != b.shape() || !spacing_ok {
        return Err(Error::GeometryMismatch(format!(
            "{:?} at {:?} vs {:?} at {:?}",
            a.shape(),
            a.spacing(),
            b.shape(),
            b.spacing()
        )));
    }
    Ok(())
}

/// `2|P∩R| / (|P| + |R|)` over voxels labelled `class`. Both empty scores 1,
/// exactly one empty scores 0.
pub fn dice(pred: &LabelVolume, reference: &LabelVolume, class: u16) -> Result<f64> {
    check_geometry(pred, reference)?;
    let (mut p, mut r, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(reference.data()) {
        let (ia, ib) = (a == class, b == class);
        p += ia as usize;
        r += ib as usize;
        both += (ia && ib) as usize;
    }
    Ok(match (p, r) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => 2.0 * both as f64 / (p + r) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDice {
    pub case_id: String,
    /// Dice for classes 1..=C.
    pub per_class: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub num_classes: u16,
    pub cases: Vec<CaseDice>,
    /// Mean over cases, per foreground class.
    pub per_class_mean: Vec<f64>,
    pub mean_foreground_dice: f64,
}

/// Pooled mean over all (case, class) entries.
pub fn mean_foreground_dice(per_case: &[Vec<f64>]) -> Result<f64> {
    let n: usize = per_case.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::EmptyInput("no Dice entries"));
    }
    Ok(per_case.iter().flatten().sum::<f64>() / n as f64)
}

pub fn case_dice(pred: &LabelVolume, reference: &LabelVolume, num_classes: u16) -> Result<Vec<f64>> {
    (1..=num_classes).map(|c| dice(pred, reference, c)).collect()
}

/// Evaluate `(case id, prediction, reference)` triples in parallel.
pub fn evaluate(pairs: &[(String, LabelVolume, LabelVolume)], num_classes: u16) -> Result<EvaluationResult> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no cases to evaluate"));
    }
    let cases: Vec<CaseDice> = pairs
        .par_iter()
        .map(|(id, p, r)| Ok(CaseDice { case_id: id.clone(), per_class: case_dice(p, r, num_classes)? }))
        .collect::<Result<_>>()?;
    summarize(cases, num_classes)
}

pub(crate) fn summarize(cases: Vec<CaseDice>, num_classes: u16) -> Result<EvaluationResult> {
    let per_case: Vec<Vec<f64>> = cases.iter().map(|c| c.per_class.clone()).collect();
    let mean = mean_foreground_dice(&per_case)?;
    let per_class_mean =
        (0..num_classes as usize).map(|k| per_case.iter().map(|v| v[k]).sum::<f64>() / per_case.len() as f64).collect();
    Ok(EvaluationResult { num_classes, cases, per_class_mean, mean_foreground_dice: mean })
}

impl EvaluationResult {
    pub fn from_cases(cases: Vec<CaseDice>, num_classes: u16) -> Result<Self> {
        if cases.iter().any(|c| c.per_class.len() != num_classes as usize) {
            return Err(Error::ShapeMismatch(format!("every case needs {num_classes} class scores")));
        }
        summarize(cases, num_classes)
    }
}
