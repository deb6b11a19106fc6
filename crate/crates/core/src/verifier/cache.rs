//! Content-addressed outcome cache.
//!
//! Entries live in memory and, when a directory is configured, as one JSON
//! file per key:
//!
//! ```json
//! {
//!   "schema": "specgate-verification-outcome",
//!   "schema_version": 1,
//!   "key": "<sha256 hex>",
//!   "verifier_version": "4.8.0",
//!   "outcome": { "verdict": "verified", "diagnostics": [], "wall_time": 1.2, "from_cache": false }
//! }
//! ```
//!
//! Files are written to a temporary name and renamed into place, so readers
//! never see a partial record and concurrent writers of the same key are
//! last-writer-wins on identical content.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{VerificationOutcome, Verdict};
use crate::source::normalize_newlines;

pub const SCHEMA: &str = "specgate-verification-outcome";
pub const SCHEMA_VERSION: u32 = 1;

pub fn cache_key(text: &str, verifier_version: &str, extra_args: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(normalize_newlines(text).as_bytes());
    h.update([0]);
    h.update(verifier_version.as_bytes());
    h.update([0]);
    for arg in extra_args {
        h.update(arg.as_bytes());
        h.update([0x1f]);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: u64,
}

#[derive(Serialize, Deserialize)]
struct Record {
    schema: String,
    schema_version: u32,
    key: String,
    verifier_version: String,
    outcome: VerificationOutcome,
}

/// Timeouts and tool failures say nothing stable about the program.
pub fn is_cacheable(verdict: Verdict) -> bool {
    !matches!(verdict, Verdict::Timeout | Verdict::ToolError)
}

#[derive(Debug, Default)]
pub struct OutcomeCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, VerificationOutcome>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl OutcomeCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(OutcomeCache {
            dir: Some(dir),
            ..Self::default()
        })
    }

    fn path(dir: &Path, key: &str) -> PathBuf {
        dir.join(format!("{key}.json"))
    }

    /// Returned outcomes have `from_cache` set.
    pub fn get(&self, key: &str) -> Option<VerificationOutcome> {
        let in_memory = self.memory.lock().unwrap().get(key).cloned();
        let found = in_memory.or_else(|| {
            let dir = self.dir.as_ref()?;
            let bytes = fs::read(Self::path(dir, key)).ok()?;
            let record: Record = serde_json::from_slice(&bytes).ok()?;
            if record.schema != SCHEMA || record.schema_version != SCHEMA_VERSION || record.key != key {
                return None;
            }
            self.memory
                .lock()
                .unwrap()
                .insert(key.to_string(), record.outcome.clone());
            Some(record.outcome)
        });
        match found {
            Some(mut outcome) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                outcome.from_cache = true;
                Some(outcome)
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    pub fn put(&self, key: &str, verifier_version: &str, outcome: &VerificationOutcome) {
        if !is_cacheable(outcome.verdict) {
            return;
        }
        let mut stored = outcome.clone();
        stored.from_cache = false;
        if let Some(dir) = &self.dir {
            let record = Record {
                schema: SCHEMA.to_string(),
                schema_version: SCHEMA_VERSION,
                key: key.to_string(),
                verifier_version: verifier_version.to_string(),
                outcome: stored.clone(),
            };
            if let Err(e) = write_atomic(dir, &Self::path(dir, key), &record) {
                tracing::warn!(key, error = %e, "could not persist verification outcome");
            }
        }
        self.memory.lock().unwrap().insert(key.to_string(), stored);
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.memory.lock().unwrap().len() as u64,
        }
    }
}

fn write_atomic(dir: &Path, target: &Path, record: &Record) -> std::io::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer_pretty(&mut tmp, record)?;
    tmp.write_all(b"\n")?;
    tmp.persist(target).map_err(|e| e.error)?;
    Ok(())
}
