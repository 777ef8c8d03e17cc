//! Shared loading for the JSON documents the tutor reads (packs, rules).

use std::path::Path;

use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error("malformed document at line {line}, column {column}: {message}")]
    MalformedDocument {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown field `{field}` at line {line}, column {column}")]
    UnknownField {
        field: String,
        line: usize,
        column: usize,
    },
    #[error("could not read document: {0}")]
    Io(#[from] std::io::Error),
}

impl LoadError {
    pub(crate) fn malformed(line: usize, column: usize, message: impl Into<String>) -> Self {
        LoadError::MalformedDocument {
            line,
            column,
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for LoadError {
    fn from(err: serde_json::Error) -> Self {
        let (line, column) = (err.line(), err.column());
        let message = err.to_string();
        if let Some(rest) = message.strip_prefix("unknown field `") {
            if let Some(end) = rest.find('`') {
                return LoadError::UnknownField {
                    field: rest[..end].to_string(),
                    line,
                    column,
                };
            }
        }
        // serde_json appends " at line X column Y"; the position is kept separately.
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        LoadError::MalformedDocument {
            line,
            column,
            message,
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, LoadError> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(LoadError::MissingFile(path.display().to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

pub(crate) fn parse<T: DeserializeOwned>(text: &str) -> Result<T, LoadError> {
    Ok(serde_json::from_str(text)?)
}

/// 1-based line and column of the first occurrence of `needle`.
pub(crate) fn locate(text: &str, needle: &str) -> (usize, usize) {
    let Some(at) = text.find(needle) else {
        return (1, 1);
    };
    let before = &text[..at];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(at, |nl| at - nl - 1) + 1;
    (line, column)
}
