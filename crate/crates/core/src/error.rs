//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad input data, arguments or documents.
    Validation,
    /// Filesystem or stream failure.
    Io,
    /// An iterative planner step did not terminate.
    NonConvergence,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("not a single-file NIfTI-1 image: {0}")]
    BadMagic(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported image dimensions {0:?}")]
    UnsupportedDimensions(Vec<i64>),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("schema version mismatch: found {found}, expected {expected}")]
    SchemaVersionMismatch { found: u64, expected: u64 },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("missing channel: {0}")]
    MissingChannel(String),
    #[error("case {0} has no label")]
    NoLabel(String),
    #[error("inconsistent channel counts across cases: {0}")]
    InconsistentChannels(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("memory budget too small for a {dim}D patch of minimal size")]
    BudgetTooSmall { dim: usize },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("CT channel {channel} has no foreground statistics")]
    MissingStats { channel: usize },
    #[error("deep supervision needs at least 3 resolutions, got {0}")]
    TooFewResolutions(usize),
    #[error("target spacing must be positive, got {0:?}")]
    DegenerateTarget(Vec<f64>),
    #[error("zero variance image (std {0:e})")]
    ZeroVariance(f64),
    #[error("oversized crop too small: need {needed:?}, got {got:?}")]
    MarginTooSmall { needed: Vec<usize>, got: Vec<usize> },
    #[error("mask is not one-hot")]
    NotOneHot,
    #[error("patch {patch:?} larger than volume {shape:?}")]
    PatchLargerThanVolume { shape: Vec<usize>, patch: Vec<usize> },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{groups} groups cannot fill {folds} folds")]
    TooFewGroups { groups: usize, folds: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::NoConvergence { .. } => ErrorCategory::NonConvergence,
            _ => ErrorCategory::Validation,
        }
    }
}
