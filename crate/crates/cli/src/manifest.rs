use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use provenance_core::hash::{canonical_hash, sha256_hex};
use provenance_core::{Error, Result};

pub const MANIFEST_LOG: &str = "manifests.jsonl";

/// Record of one command invocation. Each manifest names the hash of the one
/// before it in the same output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// Path → SHA-256. Directories hash their sorted file listing.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub exit_code: u8,
    #[serde(default)]
    pub error: Option<String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub tool_version: String,
    pub previous: Option<String>,
    pub hash: String,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// SHA-256 of a file, or of `relative-path sha256` lines for a directory.
pub fn path_hash(path: &Path) -> Result<String> {
    if path.is_file() {
        let bytes = std::fs::read(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        return Ok(sha256_hex(&bytes));
    }
    let mut listing = String::new();
    for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(path).expect("walked path under root");
            listing.push_str(&format!("{} {}\n", rel.display(), path_hash(entry.path())?));
        }
    }
    Ok(sha256_hex(listing.as_bytes()))
}

pub fn hash_paths<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<BTreeMap<String, String>> {
    paths
        .into_iter()
        .filter(|p| p.exists())
        .map(|p| Ok((p.display().to_string(), path_hash(p)?)))
        .collect()
}

impl RunManifest {
    fn content_hash(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.hash = String::new();
        canonical_hash(&copy)
    }

    /// Links the manifest to the log's last entry, seals it and appends it.
    /// Refuses to extend a log whose chain is broken.
    pub fn append(mut self, dir: &Path) -> Result<RunManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let log = dir.join(MANIFEST_LOG);
        verify_chain(&log)?;
        self.previous = read_log(&log)?.last().map(|m| m.hash.clone());
        self.hash = self.content_hash()?;
        let line = serde_json::to_string(&self).map_err(|e| Error::Json {
            context: "run manifest".into(),
            source: e,
        })?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log)
            .map_err(|e| Error::Io {
                path: log.clone(),
                source: e,
            })?;
        writeln!(file, "{line}").map_err(|e| Error::Io { path: log, source: e })?;
        Ok(self)
    }
}

pub fn read_log(path: &Path) -> Result<Vec<RunManifest>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Json {
                context: format!("{}:{}", path.display(), i + 1),
                source: e,
            })
        })
        .collect()
}

/// Checks every manifest's own hash and its link to its predecessor.
pub fn verify_chain(path: &Path) -> Result<usize> {
    let log = read_log(path)?;
    let mut previous = None;
    for (i, m) in log.iter().enumerate() {
        if m.previous != previous {
            return Err(Error::Hygiene(format!("manifest {} does not link to its predecessor", i + 1)));
        }
        if m.content_hash()? != m.hash {
            return Err(Error::Hygiene(format!("manifest {} was altered", i + 1)));
        }
        previous = Some(m.hash.clone());
    }
    Ok(log.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(command: &str) -> RunManifest {
        RunManifest {
            command: command.into(),
            arguments: vec![],
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            exit_code: 0,
            error: None,
            started_unix_ms: 1,
            finished_unix_ms: 2,
            tool_version: "test".into(),
            previous: None,
            hash: String::new(),
        }
    }

    #[test]
    fn manifests_chain() {
        let dir = tempfile::tempdir().unwrap();
        let a = manifest("simulate").append(dir.path()).unwrap();
        let b = manifest("train").append(dir.path()).unwrap();
        assert_eq!(b.previous.as_deref(), Some(a.hash.as_str()));
        assert_eq!(verify_chain(&dir.path().join(MANIFEST_LOG)).unwrap(), 2);
    }

    #[test]
    fn edited_manifest_detected() {
        let dir = tempfile::tempdir().unwrap();
        manifest("simulate").append(dir.path()).unwrap();
        manifest("train").append(dir.path()).unwrap();
        let log = dir.path().join(MANIFEST_LOG);
        let text = std::fs::read_to_string(&log).unwrap().replace("\"train\"", "\"score\"");
        std::fs::write(&log, text).unwrap();
        assert!(matches!(verify_chain(&log), Err(Error::Hygiene(_))));
    }

    #[test]
    fn directory_hash_tracks_contents() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a"), "1").unwrap();
        let before = path_hash(dir.path()).unwrap();
        std::fs::write(dir.path().join("a"), "2").unwrap();
        assert_ne!(before, path_hash(dir.path()).unwrap());
    }
}
