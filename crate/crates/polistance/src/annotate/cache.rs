//! Append-only JSONL cache of annotation records.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifacts::sha256_hex;
use crate::error::{Error, Result};

/// `sha256(template_id ‖ 0x00 ‖ text)` as hex.
pub fn idempotency_key(template_id: &str, text: &str) -> String {
    let mut bytes = Vec::with_capacity(template_id.len() + 1 + text.len());
    bytes.extend_from_slice(template_id.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(text.as_bytes());
    sha256_hex(&bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Parsed,
    /// The service answered but the reply matched no label.
    Unparsed,
    /// Every attempt failed in transport.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub key: String,
    pub template_id: String,
    pub model: String,
    pub status: Status,
    /// Raw reply, absent on failure.
    #[serde(default)]
    pub raw: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    pub attempts: u32,
    /// Unix seconds.
    pub timestamp: u64,
}

/// Latest record per key. Appends go straight to disk.
#[derive(Debug)]
pub struct Cache {
    path: PathBuf,
    records: HashMap<String, AnnotationRecord>,
}

impl Cache {
    /// Opens or creates a cache file. A trailing line without a newline is a
    /// write cut short; it is ignored and truncated away. Any other bad line
    /// is a data error.
    pub fn open(path: &Path) -> Result<Self> {
        let mut records = HashMap::new();
        if path.exists() {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            if complete < bytes.len() {
                log::warn!("{}: dropping a partial trailing record", path.display());
                let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
                f.set_len(complete as u64).map_err(|e| Error::io(path, e))?;
            }
            let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| Error::data(path, e.to_string()))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: AnnotationRecord =
                    serde_json::from_str(line).map_err(|e| Error::data(path, format!("line {}: {e}", i + 1)))?;
                records.insert(rec.key.clone(), rec);
            }
        } else if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(Self { path: path.to_path_buf(), records })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &str) -> Option<&AnnotationRecord> {
        self.records.get(key)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends one line and flushes it to disk before returning.
    pub fn append(&mut self, record: AnnotationRecord) -> Result<()> {
        let mut line = serde_json::to_vec(&record).map_err(|e| Error::data(&self.path, e.to_string()))?;
        line.push(b'\n');
        let mut f: File =
            OpenOptions::new().create(true).append(true).open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        f.write_all(&line).and_then(|_| f.sync_data()).map_err(|e| Error::io(&self.path, e))?;
        self.records.insert(record.key.clone(), record);
        Ok(())
    }
}
