//! Cross-validation folds, optionally grouped so related cases (e.g. two
//! time points of one patient) never straddle folds.

use std::collections::{BTreeMap, BTreeSet};

use segplan_core::rng::RngStream;
use segplan_core::volume_io::Versioned;
use segplan_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_FOLDS: usize = 5;

/// Validation case ids per fold; fold `k` trains on all other folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub schema_version: u64,
    pub folds: Vec<Vec<String>>,
}

impl Versioned for SplitAssignment {
    const SCHEMA_VERSION: u64 = 1;
}

impl SplitAssignment {
    pub fn fold_of(&self, case_id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|c| c == case_id))
    }

    pub fn train(&self, fold: usize) -> Vec<String> {
        let mut ids: Vec<String> =
            self.folds.iter().enumerate().filter(|(k, _)| *k != fold).flat_map(|(_, f)| f.iter().cloned()).collect();
        ids.sort();
        ids
    }

    /// The folds must partition `case_ids` exactly.
    pub fn validate(&self, case_ids: &[String]) -> Result<()> {
        if self.folds.len() < 2 {
            return Err(Error::Invalid(format!("need at least 2 folds, got {}", self.folds.len())));
        }
        let mut seen = BTreeSet::new();
        for id in self.folds.iter().flatten() {
            if !seen.insert(id.as_str()) {
                return Err(Error::Invalid(format!("case {id} appears in more than one fold")));
            }
        }
        let expected: BTreeSet<&str> = case_ids.iter().map(String::as_str).collect();
        if let Some(extra) = seen.difference(&expected).next() {
            return Err(Error::Invalid(format!("split lists unknown case {extra}")));
        }
        if let Some(missing) = expected.difference(&seen).next() {
            return Err(Error::Invalid(format!("case {missing} is not assigned to a fold")));
        }
        Ok(())
    }
}

/// Shuffle the distinct groups (a case is its own group when unmapped) and
/// deal them round-robin over `folds`.
pub fn make_cv_splits(
    case_ids: &[String],
    folds: usize,
    groups: Option<&BTreeMap<String, String>>,
    rng: &mut RngStream,
) -> Result<SplitAssignment> {
    if folds < 2 {
        return Err(Error::Invalid(format!("need at least 2 folds, got {folds}")));
    }
    let group_of = |id: &String| groups.and_then(|g| g.get(id)).cloned().unwrap_or_else(|| id.clone());
    let mut members: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for id in case_ids {
        members.entry(group_of(id)).or_default().push(id.clone());
    }
    if members.len() < folds {
        return Err(Error::TooFewGroups { groups: members.len(), folds });
    }
    let mut order: Vec<Vec<String>> = members.into_values().collect();
    rng.shuffle(&mut order);
    let mut out = vec![Vec::new(); folds];
    for (i, group) in order.into_iter().enumerate() {
        out[i % folds].extend(group);
    }
    for f in &mut out {
        f.sort();
    }
    Ok(SplitAssignment { schema_version: SplitAssignment::SCHEMA_VERSION, folds: out })
}
