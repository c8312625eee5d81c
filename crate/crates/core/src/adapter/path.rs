use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Dotted path into a raw record, e.g. `payload.tool.name` or `calls.0.args`.
/// Numeric segments index into arrays.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PathExpr {
    text: String,
    segments: Vec<String>,
}

impl PathExpr {
    pub fn parse(text: &str) -> Result<Self> {
        let err = |reason: &str| Error::PathExpr {
            path: text.to_string(),
            reason: reason.to_string(),
        };
        if text.is_empty() {
            return Err(err("empty path"));
        }
        let mut segments = Vec::new();
        for seg in text.split('.') {
            if seg.is_empty() {
                return Err(err("empty segment"));
            }
            if !seg
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(err("segments may only contain [A-Za-z0-9_-]"));
            }
            segments.push(seg.to_string());
        }
        Ok(PathExpr {
            text: text.to_string(),
            segments,
        })
    }

    pub(crate) fn from_segments(segments: &[String]) -> Self {
        PathExpr {
            text: segments.join("."),
            segments: segments.to_vec(),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn last_segment(&self) -> &str {
        self.segments.last().map(String::as_str).unwrap_or("")
    }

    pub fn resolve<'v>(&self, record: &'v Value) -> Option<&'v Value> {
        let mut node = record;
        for seg in &self.segments {
            node = match node {
                Value::Object(map) => map.get(seg)?,
                Value::Array(items) => items.get(seg.parse::<usize>().ok()?)?,
                _ => return None,
            };
        }
        Some(node)
    }
}

impl TryFrom<String> for PathExpr {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        PathExpr::parse(&value)
    }
}

impl From<PathExpr> for String {
    fn from(value: PathExpr) -> Self {
        value.text
    }
}

impl fmt::Display for PathExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}
