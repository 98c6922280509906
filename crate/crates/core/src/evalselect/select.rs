use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::PlanKind;

/// A single configuration or an ensemble of two. Written as `3d_fullres` or
/// `3d_lowres+3d_fullres`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Candidate {
    Single(PlanKind),
    Ensemble(PlanKind, PlanKind),
}

/// Tie-break order among configuration kinds.
const KIND_ORDER: [PlanKind; 4] =
    [PlanKind::U3DFullres, PlanKind::U3DCascadeFullres, PlanKind::U3DLowres, PlanKind::U2D];

fn kind_rank(k: PlanKind) -> usize {
    KIND_ORDER.iter().position(|&o| o == k).unwrap_or(KIND_ORDER.len())
}

impl Candidate {
    pub fn members(&self) -> Vec<PlanKind> {
        match *self {
            Candidate::Single(k) => vec![k],
            Candidate::Ensemble(a, b) => vec![a, b],
        }
    }

    /// Key for ties: singles first, then members by kind order.
    fn tie_key(&self) -> (usize, Vec<usize>) {
        let mut ranks: Vec<usize> = self.members().into_iter().map(kind_rank).collect();
        ranks.sort_unstable();
        (ranks.len(), ranks)
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Candidate::Single(k) => write!(f, "{k}"),
            Candidate::Ensemble(a, b) => write!(f, "{a}+{b}"),
        }
    }
}

impl FromStr for Candidate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('+') {
            None => Ok(Candidate::Single(s.trim().parse()?)),
            Some((a, b)) => {
                let (a, b): (PlanKind, PlanKind) = (a.trim().parse()?, b.trim().parse()?);
                if a == b {
                    return Err(Error::Invalid(format!("ensemble of {a} with itself")));
                }
                Ok(Candidate::Ensemble(a, b))
            }
        }
    }
}

impl TryFrom<String> for Candidate {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Candidate> for String {
    fn from(c: Candidate) -> String {
        c.to_string()
    }
}

/// Highest mean foreground Dice wins; exact ties prefer a single
/// configuration, then 3D full-res, cascade, low-res, 2D.
pub fn select_configuration(scores: &[(Candidate, f64)]) -> Result<(Candidate, f64)> {
    scores
        .iter()
        .copied()
        .reduce(
            |best, next| {
                if next.1 > best.1 || (next.1 == best.1 && next.0.tie_key() < best.0.tie_key()) {
                    next
                } else {
                    best
                }
            },
        )
        .ok_or(Error::EmptyInput("no candidate scores"))
}
