//! Library side of the `segplan` command-line tool.

pub mod dataset;
pub mod reports;
pub mod run;
pub mod splits;
pub mod steps;

use segplan_core::{Error, ErrorCategory};

pub const SEED_ENV: &str = "SEGPLAN_SEED";

/// 2 for validation errors, 3 for I/O failures, 4 for planner non-convergence.
pub fn exit_code(err: &Error) -> u8 {
    match err.category() {
        ErrorCategory::Validation => 2,
        ErrorCategory::Io => 3,
        ErrorCategory::NonConvergence => 4,
    }
}

/// One-line JSON error report for stderr.
pub fn error_report(err: &Error) -> String {
    let category = match err.category() {
        ErrorCategory::Validation => "validation",
        ErrorCategory::Io => "io",
        ErrorCategory::NonConvergence => "non_convergence",
    };
    serde_json::json!({ "error": { "category": category, "exit_code": exit_code(err), "message": err.to_string() } })
        .to_string()
}
