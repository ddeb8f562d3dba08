//! Append-only archive of submitted patterns.
//!
//! Entries live in a newline-delimited JSON log. The log is read once at
//! startup to rebuild the in-memory index; afterwards every new entry is
//! appended and flushed before it becomes visible.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use gestalt_core::format::{self, RawPattern};
use gestalt_core::pipeline::{DetectOptions, DetectionJson};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub id: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub pattern: RawPattern,
    pub config: DetectOptions,
    pub detections: Vec<DetectionJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parent: unknown id {0}")]
    UnknownParent(u64),
}

struct Inner {
    file: File,
    entries: Vec<ArchiveEntry>,
    by_id: HashMap<u64, usize>,
}

pub struct Archive {
    path: PathBuf,
    inner: Mutex<Inner>,
    /// Unparseable lines found while loading, one-based.
    skipped: Vec<usize>,
}

/// Fields supplied by the client; id and timestamp are assigned on append.
pub struct NewEntry {
    pub pattern: RawPattern,
    pub config: DetectOptions,
    pub detections: Vec<DetectionJson>,
    pub note: Option<String>,
    pub parent: Option<u64>,
}

impl Archive {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ArchiveError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| ArchiveError::Io {
            path: path.clone(),
            source,
        };
        let mut entries = Vec::new();
        let mut skipped = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io_err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                match format::from_json::<ArchiveEntry>(&line) {
                    Ok(e) => entries.push(e),
                    Err(_) => skipped.push(i + 1),
                }
            }
        }
        let by_id = entries.iter().enumerate().map(|(k, e)| (e.id, k)).collect();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        Ok(Archive {
            path,
            inner: Mutex::new(Inner {
                file,
                entries,
                by_id,
            }),
            skipped,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn skipped_lines(&self) -> &[usize] {
        &self.skipped
    }

    pub fn append(&self, new: NewEntry, timestamp: u64) -> Result<ArchiveEntry, ArchiveError> {
        let mut inner = self.inner.lock().expect("archive lock");
        if let Some(p) = new.parent {
            if !inner.by_id.contains_key(&p) {
                return Err(ArchiveError::UnknownParent(p));
            }
        }
        let id = inner.entries.last().map_or(1, |e| e.id + 1);
        let entry = ArchiveEntry {
            id,
            timestamp,
            pattern: new.pattern,
            config: new.config,
            detections: new.detections,
            note: new.note,
            parent: new.parent,
        };
        let mut line = format::to_json(&entry);
        line.push('\n');
        let io_err = |source| ArchiveError::Io {
            path: self.path.clone(),
            source,
        };
        inner.file.write_all(line.as_bytes()).map_err(io_err)?;
        inner.file.flush().map_err(io_err)?;
        inner.file.sync_data().map_err(io_err)?;
        // hand back exactly what was persisted
        let stored: ArchiveEntry = format::from_json(line.trim_end()).expect("own output parses");
        let pos = inner.entries.len();
        inner.entries.push(stored.clone());
        inner.by_id.insert(id, pos);
        Ok(stored)
    }

    pub fn get(&self, id: u64) -> Option<ArchiveEntry> {
        let inner = self.inner.lock().expect("archive lock");
        inner.by_id.get(&id).map(|&k| inner.entries[k].clone())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("archive lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Newest first.
    pub fn page(&self, page: usize, per_page: usize) -> Vec<ArchiveEntry> {
        let inner = self.inner.lock().expect("archive lock");
        inner
            .entries
            .iter()
            .rev()
            .skip(page.saturating_mul(per_page))
            .take(per_page)
            .cloned()
            .collect()
    }

    /// The entry followed by its parent chain up to the root.
    pub fn ancestry(&self, id: u64) -> Option<Vec<ArchiveEntry>> {
        let inner = self.inner.lock().expect("archive lock");
        let mut chain = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            if chain.len() > inner.entries.len() {
                break;
            }
            let entry = &inner.entries[*inner.by_id.get(&c)?];
            chain.push(entry.clone());
            cur = entry.parent;
        }
        Some(chain)
    }
}
