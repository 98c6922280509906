//! Versioned JSON documents (fingerprints, plans, reports).

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// A document type that carries an explicit `schema_version` field.
pub trait Versioned: Serialize + DeserializeOwned {
    const SCHEMA_VERSION: u64;
}

/// Serialize as pretty JSON with a trailing newline; output is byte-stable.
pub fn write_document<T: Versioned>(doc: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_document<T: Versioned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_document(&text).map_err(|e| match e {
        Error::Json { source, .. } => Error::json(path, source),
        other => other,
    })
}

pub(crate) fn parse_document<T: Versioned>(text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::json("<document>", e))?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
    if found != T::SCHEMA_VERSION {
        return Err(Error::SchemaVersionMismatch { found, expected: T::SCHEMA_VERSION });
    }
    serde_json::from_value(value).map_err(|e| Error::json("<document>", e))
}
