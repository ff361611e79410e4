use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{ExpansionError, GenerationParams};

/// One line of the generation cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub prompt_hash: String,
    pub model: String,
    pub params: GenerationParams,
    pub text: String,
    pub created_at: DateTime<Utc>,
}

type Key = (String, String);

/// Append-only JSON-lines cache of generations keyed by
/// `(prompt_hash, model)`.
///
/// The first record for a key is authoritative: later duplicates in the
/// file are ignored on load, and [`GenerationCache::insert`] never
/// replaces an existing entry.
pub struct GenerationCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<Key, CacheRecord>>,
    writer: Mutex<Option<File>>,
}

impl GenerationCache {
    pub fn in_memory() -> Self {
        GenerationCache {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) a cache file and loads its records.
    pub fn open(path: &Path) -> Result<Self, ExpansionError> {
        let io_err = |e| ExpansionError::Io(path.to_path_buf(), e);
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io_err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord =
                    serde_json::from_str(&line).map_err(|e| ExpansionError::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!("cache record: {e}"),
                    })?;
                entries
                    .entry((rec.prompt_hash.clone(), rec.model.clone()))
                    .or_insert(rec);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok(GenerationCache {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(file)),
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

    pub fn get(&self, prompt_hash: &str, model: &str) -> Option<CacheRecord> {
        self.entries
            .read()
            .unwrap()
            .get(&(prompt_hash.to_string(), model.to_string()))
            .cloned()
    }

    /// Stores `record` unless its key is already present, and returns the
    /// record now held for that key.
    pub fn insert(&self, record: CacheRecord) -> Result<CacheRecord, ExpansionError> {
        let key = (record.prompt_hash.clone(), record.model.clone());
        let mut entries = self.entries.write().unwrap();
        if let Some(existing) = entries.get(&key) {
            return Ok(existing.clone());
        }
        if let Some(file) = self.writer.lock().unwrap().as_mut() {
            let mut line = serde_json::to_string(&record).expect("cache record serializes");
            line.push('\n');
            let path = self.path.clone().unwrap_or_default();
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| ExpansionError::Io(path, e))?;
        }
        entries.insert(key, record.clone());
        Ok(record)
    }
}
