use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Oracle, OracleError};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O on {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub oracle_fingerprint: String,
    pub prompt_hash: String,
    pub response: String,
    pub created_at: String,
}

impl CacheRecord {
    pub fn new(oracle_fingerprint: &str, prompt: &str, response: &str) -> Self {
        Self::with_hash(oracle_fingerprint, prompt_hash(prompt), response)
    }

    pub fn with_hash(oracle_fingerprint: &str, prompt_hash: String, response: &str) -> Self {
        CacheRecord {
            oracle_fingerprint: oracle_fingerprint.to_string(),
            prompt_hash,
            response: response.to_string(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

/// SHA-256 of the full rendered prompt, lowercase hex.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

type Key = (String, String);

/// Append-only JSONL response cache, loaded into memory on open.
///
/// Duplicate keys keep the first response. A torn final line (from a crash
/// mid-append) is ignored on load.
#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<Key, String>>,
    file: Mutex<Option<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            path: None,
            entries: RwLock::new(HashMap::new()),
            file: Mutex::new(None),
        }
    }

    pub fn open(path: &Path) -> Result<Self, CacheError> {
        let io = |e: std::io::Error| CacheError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(r) => {
                        entries
                            .entry((r.oracle_fingerprint, r.prompt_hash))
                            .or_insert(r.response);
                    }
                    Err(e) => log::warn!("{}: skipping unreadable cache line {}: {e}", path.display(), n + 1),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        // A torn last line must not swallow the next record.
        let len = file.metadata().map_err(io)?.len();
        if len > 0 && !ends_with_newline(path).map_err(io)? {
            file.write_all(b"\n").map_err(io)?;
        }
        Ok(ResponseCache {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            file: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, oracle_fingerprint: &str, prompt_hash: &str) -> Option<String> {
        self.entries
            .read()
            .unwrap()
            .get(&(oracle_fingerprint.to_string(), prompt_hash.to_string()))
            .cloned()
    }

    /// Stores `record` unless its key is already present. Returns whether it
    /// was stored.
    pub fn put(&self, record: &CacheRecord) -> Result<bool, CacheError> {
        // The file lock serializes appends and keeps file order = map order.
        let mut file = self.file.lock().unwrap();
        let key = (record.oracle_fingerprint.clone(), record.prompt_hash.clone());
        if self.entries.read().unwrap().contains_key(&key) {
            return Ok(false);
        }
        if let Some(f) = file.as_mut() {
            let mut line = serde_json::to_string(record).expect("cache record serializes");
            line.push('\n');
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| CacheError::Io {
                    path: self.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                    reason: e.to_string(),
                })?;
        }
        self.entries.write().unwrap().insert(key, record.response.clone());
        Ok(true)
    }

    /// Counts of records per oracle fingerprint.
    pub fn fingerprint_counts(&self) -> Vec<(String, usize)> {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for (fp, _) in self.entries.read().unwrap().keys() {
            *counts.entry(fp.clone()).or_default() += 1;
        }
        let mut v: Vec<_> = counts.into_iter().collect();
        v.sort();
        v
    }
}

fn ends_with_newline(path: &Path) -> std::io::Result<bool> {
    use std::io::{Read, Seek, SeekFrom};
    let mut f = File::open(path)?;
    f.seek(SeekFrom::End(-1))?;
    let mut b = [0u8; 1];
    f.read_exact(&mut b)?;
    Ok(b[0] == b'\n')
}

/// Serves responses from a [`ResponseCache`], falling through to `inner` on a
/// miss and recording the result.
pub struct CachedOracle<O> {
    inner: O,
    cache: std::sync::Arc<ResponseCache>,
}

impl<O: Oracle> CachedOracle<O> {
    pub fn new(inner: O, cache: std::sync::Arc<ResponseCache>) -> Self {
        CachedOracle { inner, cache }
    }
}

impl<O: Oracle> Oracle for CachedOracle<O> {
    fn complete(&self, prompt: &str) -> Result<String, OracleError> {
        let fingerprint = self.inner.fingerprint();
        let hash = prompt_hash(prompt);
        if let Some(hit) = self.cache.get(&fingerprint, &hash) {
            return Ok(hit);
        }
        let response = self.inner.complete(prompt)?;
        let record = CacheRecord::with_hash(&fingerprint, hash, &response);
        self.cache.put(&record)?;
        // Another worker may have won the race; first write wins.
        Ok(self.cache.get(&fingerprint, &record.prompt_hash).unwrap_or(response))
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
}
