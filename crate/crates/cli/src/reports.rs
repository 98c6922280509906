//! Documents written by the evaluation-side subcommands, and the CSV score
//! tables they read.

use std::path::Path;

use segplan_core::augment::{AugmentationParams, PatchSample};
use segplan_core::evalselect::{Candidate, EvaluationResult, PostprocessingDecision, RankDistribution};
use segplan_core::volume_io::Versioned;
use segplan_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<Candidate>,
    pub result: EvaluationResult,
}

impl Versioned for EvaluationReport {
    const SCHEMA_VERSION: u64 = 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate: Candidate,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub schema_version: u64,
    pub selected: Candidate,
    pub score: f64,
    pub candidates: Vec<CandidateScore>,
}

impl Versioned for SelectionReport {
    const SCHEMA_VERSION: u64 = 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostprocessReport {
    pub schema_version: u64,
    pub decision: PostprocessingDecision,
    pub mean_dice_before: f64,
    pub mean_dice_after: f64,
}

impl Versioned for PostprocessReport {
    const SCHEMA_VERSION: u64 = 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub schema_version: u64,
    pub algorithms: Vec<String>,
    pub seed: u64,
    pub distribution: RankDistribution,
    pub first_place_frequency: Vec<f64>,
}

impl Versioned for RankReport {
    const SCHEMA_VERSION: u64 = 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewPatch {
    pub sample: PatchSample,
    pub params: AugmentationParams,
    pub channels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPreview {
    pub schema_version: u64,
    pub case_id: String,
    pub plan_kind: segplan_core::planner::PlanKind,
    pub seed: u64,
    pub patch_size: Vec<usize>,
    pub no_foreground: bool,
    pub patches: Vec<PreviewPatch>,
}

impl Versioned for AugmentPreview {
    const SCHEMA_VERSION: u64 = 1;
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Invalid(format!("{}: {other:?}", path.display())),
    }
}

fn parse_score(path: &Path, s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Invalid(format!("{}: '{s}' is not a number", path.display())))
}

/// Two-column table `candidate,score`.
pub fn read_candidate_scores(path: &Path) -> Result<Vec<(Candidate, f64)>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if row.len() != 2 {
            return Err(Error::Invalid(format!("{}: expected candidate,score rows", path.display())));
        }
        out.push((row[0].parse()?, parse_score(path, &row[1])?));
    }
    Ok(out)
}

/// Header `case,<alg>,<alg>,…`, one row per case. Returns the algorithm
/// names and a score list per algorithm.
pub fn read_score_matrix(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 {
        return Err(Error::Invalid(format!("{}: header needs a case column and algorithms", path.display())));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut scores = vec![Vec::new(); names.len()];
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        for (a, s) in scores.iter_mut().enumerate() {
            s.push(parse_score(path, row.get(a + 1).unwrap_or(""))?);
        }
    }
    Ok((names, scores))
}
