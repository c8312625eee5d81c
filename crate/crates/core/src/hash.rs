//! Content digests for frozen artifacts.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Canonical text form of a serializable value: keys sorted, pretty-printed.
///
/// `serde_json::Value` keeps object keys in a `BTreeMap`, so routing through
/// it sorts every nested map regardless of struct field order.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let tree = serde_json::to_value(value).map_err(|e| Error::json("canonicalize", e))?;
    serde_json::to_string_pretty(&tree).map_err(|e| Error::json("canonicalize", e))
}

pub fn canonical_hash<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(canonical_json(value)?.as_bytes()))
}

/// Digest over the exact bit patterns of a float sequence.
pub fn float_hash<'a>(chunks: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut hasher = Sha256::new();
    for chunk in chunks {
        hasher.update((chunk.len() as u64).to_le_bytes());
        for v in chunk {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}
