use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Schema {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("duplicate {kind} {key:?}")]
    Duplicate { kind: &'static str, key: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("descriptor {descriptor:?} cannot be paired with noun {noun:?}")]
    Compatibility { descriptor: String, noun: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("render failed: {0}")]
    Render(String),

    #[error("{} unresolved id(s): {}", .offenders.len(), preview(.offenders))]
    Join { offenders: Vec<String> },

    #[error("invalid value: {0}")]
    Value(String),

    #[error("shape mismatch: expected {expected} values, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate bias direction: {0}")]
    DegenerateDirection(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut out = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        out.push_str(&format!(", ... ({} more)", ids.len() - SHOWN));
    }
    out
}

impl Error {
    pub(crate) fn schema(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Schema {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}
