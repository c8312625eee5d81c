use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure classes, used by the command line to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Hygiene,
    Compute,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("adapter induction failed for field `{field}`: {reason}")]
    Induction { field: String, reason: String },

    #[error("malformed path expression `{path}`: {reason}")]
    PathExpr { path: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("split hygiene violation: {0}")]
    Hygiene(String),

    #[error("training objective is degenerate: {0}")]
    DegenerateObjective(String),

    #[error("exact enumeration needs {branches} branches, above the bound of {bound}; use monte-carlo mode")]
    EnumerationBound { branches: u128, bound: u128 },

    #[error("composition gate refused: {0}")]
    Gate(String),

    #[error("missing epistemic position for contributing party `{0}`")]
    MissingPosition(String),

    #[error("dangling evidence reference `{reference}` under readiness condition {condition}")]
    DanglingEvidence { condition: String, reference: String },

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Toml {
        context: String,
        #[source]
        source: toml::de::Error,
    },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::PathExpr { .. } | Error::Toml { .. } | Error::Gate(_) => {
                ErrorCategory::Config
            }
            Error::Hygiene(_) => ErrorCategory::Hygiene,
            Error::DegenerateObjective(_)
            | Error::EnumerationBound { .. }
            | Error::Undefined(_)
            | Error::Numeric(_)
            | Error::Dimension { .. } => ErrorCategory::Compute,
            Error::Validation(_)
            | Error::Induction { .. }
            | Error::MissingPosition(_)
            | Error::DanglingEvidence { .. }
            | Error::Io { .. }
            | Error::Json { .. } => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
