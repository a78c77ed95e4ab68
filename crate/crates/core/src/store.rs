//! Append-only JSON-lines record file.
//!
//! Each line is one operation:
//!
//! ```text
//! {"op":"put","key":"<key>","value":{...}}
//! {"op":"del","key":"<key>"}
//! ```
//!
//! Replaying the file in order yields the live key set. Every append is
//! flushed and synced before returning. When dead lines outnumber live
//! records the file is rewritten (to `<path>.tmp`, then renamed over).

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store line {line} in {path}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Entry<T> {
    Put { key: String, value: T },
    Del { key: String },
}

/// Minimum number of lines before compaction is considered.
const COMPACT_FLOOR: usize = 64;

pub struct RecordLog<T> {
    path: Option<PathBuf>,
    lines: usize,
    _marker: PhantomData<fn() -> T>,
}

impl<T: Serialize + DeserializeOwned> RecordLog<T> {
    /// A log that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self { path: None, lines: 0, _marker: PhantomData }
    }

    /// Opens (creating if needed) the file at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, BTreeMap<String, T>), StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io { path: path.clone(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).read(true).open(&path).map_err(io)?;
        let mut records = BTreeMap::new();
        let mut lines = 0;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            lines += 1;
            let entry: Entry<T> = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                line: n + 1,
                reason: e.to_string(),
            })?;
            match entry {
                Entry::Put { key, value } => {
                    records.insert(key, value);
                }
                Entry::Del { key } => {
                    records.remove(&key);
                }
            }
        }
        Ok((Self { path: Some(path), lines, _marker: PhantomData }, records))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn put(&mut self, key: &str, value: &T) -> Result<(), StoreError> {
        self.append(&Entry::Put { key: key.to_string(), value })
    }

    pub fn delete(&mut self, key: &str) -> Result<(), StoreError> {
        self.append(&Entry::<&T>::Del { key: key.to_string() })
    }

    fn append<V: Serialize>(&mut self, entry: &Entry<V>) -> Result<(), StoreError> {
        let Some(path) = &self.path else { return Ok(()) };
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut line = serde_json::to_vec(entry).expect("record serializes");
        line.push(b'\n');
        let mut file = OpenOptions::new().append(true).open(path).map_err(io)?;
        file.write_all(&line).map_err(io)?;
        file.sync_data().map_err(io)?;
        self.lines += 1;
        Ok(())
    }

    /// Rewrites the file when it is mostly dead lines.
    pub fn maybe_compact(&mut self, live: &BTreeMap<String, T>) -> Result<bool, StoreError> {
        if self.lines < COMPACT_FLOOR || self.lines < 2 * live.len() {
            return Ok(false);
        }
        self.compact(live)?;
        Ok(true)
    }

    pub fn compact(&mut self, live: &BTreeMap<String, T>) -> Result<(), StoreError> {
        let Some(path) = &self.path else { return Ok(()) };
        let io = |source| StoreError::Io { path: path.clone(), source };
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
            for (key, value) in live {
                serde_json::to_writer(&mut w, &Entry::Put { key: key.clone(), value }).expect("record serializes");
                w.write_all(b"\n").map_err(io)?;
            }
            let file = w.into_inner().map_err(|e| io(e.into_error()))?;
            file.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, path).map_err(io)?;
        self.lines = live.len();
        Ok(())
    }
}
