use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::JudgeError;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub candidate: String,
    pub reference: String,
    pub language: String,
    /// Pipeline identifier (judge, translator and pivot settings).
    pub judge: String,
}

/// One line of the cache file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub candidate: String,
    pub reference: String,
    pub language: String,
    pub judge: String,
    pub verdict: u8,
}

/// Verdict cache, optionally backed by an append-only JSONL file.
///
/// Reads and writes are serialised through a mutex; a repeated insert of
/// the same key overwrites in memory and appends another line on disk.
#[derive(Debug, Default)]
pub struct JudgeCache {
    entries: Mutex<HashMap<CacheKey, bool>>,
    file: Option<Mutex<File>>,
}

impl JudgeCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Replays `path` if it exists and appends new verdicts to it.
    pub fn open(path: &Path) -> Result<Self, JudgeError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: CacheEntry = serde_json::from_str(&line)
                    .map_err(|err| JudgeError::Cache(format!("line {}: {err}", idx + 1)))?;
                let verdict = match e.verdict {
                    0 => false,
                    1 => true,
                    v => return Err(JudgeError::Cache(format!("line {}: verdict {v}", idx + 1))),
                };
                entries.insert(
                    CacheKey {
                        candidate: e.candidate,
                        reference: e.reference,
                        language: e.language,
                        judge: e.judge,
                    },
                    verdict,
                );
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: Mutex::new(entries),
            file: Some(Mutex::new(file)),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<bool> {
        self.entries
            .lock()
            .expect("cache lock poisoned")
            .get(key)
            .copied()
    }

    pub fn insert(&self, key: CacheKey, verdict: bool) -> Result<(), JudgeError> {
        if let Some(file) = &self.file {
            let entry = CacheEntry {
                candidate: key.candidate.clone(),
                reference: key.reference.clone(),
                language: key.language.clone(),
                judge: key.judge.clone(),
                verdict: u8::from(verdict),
            };
            let mut line =
                serde_json::to_string(&entry).map_err(|e| JudgeError::Cache(e.to_string()))?;
            line.push('\n');
            let mut f = file.lock().expect("cache file lock poisoned");
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.entries
            .lock()
            .expect("cache lock poisoned")
            .insert(key, verdict);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(c: &str) -> CacheKey {
        CacheKey {
            candidate: c.into(),
            reference: "ref".into(),
            language: "en".into(),
            judge: "j".into(),
        }
    }

    #[test]
    fn persists_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = JudgeCache::open(&path).unwrap();
            cache.insert(key("a"), true).unwrap();
            cache.insert(key("b"), false).unwrap();
        }
        let cache = JudgeCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get(&key("a")), Some(true));
        assert_eq!(cache.get(&key("b")), Some(false));
        assert_eq!(cache.get(&key("c")), None);
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{\"candidate\":1}\n").unwrap();
        assert!(matches!(JudgeCache::open(&path), Err(JudgeError::Cache(_))));
    }
}
