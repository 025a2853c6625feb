//! JSONL record/replay store of completions.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub model: String,
    pub prompt_hash: String,
    pub prompt: String,
    pub completion: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Distinguishes repeated requests for the same prompt.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub sample: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct RecordKey {
    pub model: String,
    pub prompt_hash: String,
    pub sample: u32,
}

impl RecordKey {
    pub fn of(record: &CompletionRecord) -> Self {
        RecordKey {
            model: record.model.clone(),
            prompt_hash: record.prompt_hash.clone(),
            sample: record.sample,
        }
    }
}

/// Load a fixture file. A missing file is an empty store; later lines
/// supersede earlier lines with the same key.
pub fn load(path: &Path) -> Result<Vec<CompletionRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::read(path, e)),
    };
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::read(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Fixture {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: CompletionRecord =
            serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if prompt_hash(&record.prompt) != record.prompt_hash {
            return Err(bad("prompt_hash does not match prompt".into()));
        }
        records.push(record);
    }
    Ok(records)
}

pub(crate) fn index(records: Vec<CompletionRecord>) -> HashMap<RecordKey, CompletionRecord> {
    records.into_iter().map(|r| (RecordKey::of(&r), r)).collect()
}

/// Append-only writer; each record is flushed as one line.
pub(crate) struct FixtureWriter {
    path: PathBuf,
    file: File,
}

impl FixtureWriter {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::write(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::write(path, e))?;
        Ok(FixtureWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, record: &CompletionRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::write(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(prompt: &str, completion: &str) -> CompletionRecord {
        CompletionRecord {
            model: "m".into(),
            prompt_hash: prompt_hash(prompt),
            prompt: prompt.into(),
            completion: completion.into(),
            prompt_tokens: 1,
            completion_tokens: 1,
            sample: 0,
        }
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(
            prompt_hash(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn append_then_load_with_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/fx.jsonl");
        let mut w = FixtureWriter::open(&path).unwrap();
        w.append(&record("p", "first")).unwrap();
        w.append(&record("q", "other")).unwrap();
        w.append(&record("p", "second")).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.len(), 3);
        let idx = index(loaded);
        let key = RecordKey::of(&record("p", ""));
        assert_eq!(idx[&key].completion, "second");
    }

    #[test]
    fn missing_file_is_empty() {
        assert!(load(Path::new("/nonexistent/fx.jsonl")).unwrap().is_empty());
    }

    #[test]
    fn tampered_hash_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.jsonl");
        let mut r = record("p", "c");
        r.prompt = "changed".into();
        fs::write(&path, serde_json::to_string(&r).unwrap()).unwrap();
        assert!(matches!(load(&path), Err(Error::Fixture { line: 1, .. })));
    }
}
