//! Append-only run ledger: one JSON line per processed image.
//!
//! A line is written only after the image's shard is in place, so every `done` entry has
//! its items on disk. A run killed mid-write leaves at most one partial last line, which
//! is cut off when the ledger is reopened.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Done,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub image_id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default)]
    pub items: usize,
    /// Items per task family.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub families: BTreeMap<String, usize>,
    /// Problem candidates rejected by validation.
    #[serde(default)]
    pub rejected_problems: usize,
    /// Objects dropped before synthesis (no geometry, no matching detection).
    #[serde(default)]
    pub dropped_objects: usize,
    #[serde(default)]
    pub elapsed_ms: u64,
}

pub struct Ledger {
    path: PathBuf,
    file: Mutex<File>,
    entries: BTreeMap<String, LedgerEntry>,
}

fn parse_lines(path: &Path, text: &str) -> Result<BTreeMap<String, LedgerEntry>, PipelineError> {
    let mut entries = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: LedgerEntry = serde_json::from_str(line).map_err(|e| PipelineError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        entries.insert(e.image_id.clone(), e);
    }
    Ok(entries)
}

impl Ledger {
    /// Opens (or creates) the ledger for appending. Later lines for an image supersede
    /// earlier ones.
    pub fn open(path: &Path) -> Result<Self, PipelineError> {
        let io = |e| PipelineError::io(path, e);
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io(e)),
        };
        let complete = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        let text = String::from_utf8_lossy(&bytes[..complete]);
        let entries = parse_lines(path, &text)?;
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        if complete < bytes.len() {
            file.set_len(complete as u64).map_err(io)?;
        }
        Ok(Ledger { path: path.to_path_buf(), file: Mutex::new(file), entries })
    }

    /// Entries present when the ledger was opened.
    pub fn previous(&self, image_id: &str) -> Option<&LedgerEntry> {
        self.entries.get(image_id)
    }

    pub fn append(&self, entry: &LedgerEntry) -> Result<(), PipelineError> {
        let mut line = serde_json::to_vec(entry).expect("ledger entries serialize");
        line.push(b'\n');
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(&line).and_then(|_| f.flush()).map_err(|e| PipelineError::io(&self.path, e))
    }

    /// Latest entry per image.
    pub fn read(path: &Path) -> Result<BTreeMap<String, LedgerEntry>, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        parse_lines(path, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, status: Status) -> LedgerEntry {
        LedgerEntry {
            image_id: id.into(),
            status,
            reason: None,
            items: 3,
            families: BTreeMap::new(),
            rejected_problems: 0,
            dropped_objects: 0,
            elapsed_ms: 1,
        }
    }

    #[test]
    fn partial_last_line_is_dropped_on_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        {
            let l = Ledger::open(&path).unwrap();
            l.append(&entry("a", Status::Done)).unwrap();
            l.append(&entry("b", Status::Failed)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"image_id":"c","sta"#).unwrap();
        drop(f);
        let l = Ledger::open(&path).unwrap();
        assert_eq!(l.previous("a").map(|e| e.status), Some(Status::Done));
        assert!(l.previous("c").is_none());
        l.append(&entry("c", Status::Skipped)).unwrap();
        let all = Ledger::read(&path).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all["c"].status, Status::Skipped);
    }

    #[test]
    fn later_lines_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let l = Ledger::open(&path).unwrap();
        l.append(&entry("a", Status::Failed)).unwrap();
        l.append(&entry("a", Status::Done)).unwrap();
        assert_eq!(Ledger::read(&path).unwrap()["a"].status, Status::Done);
    }
}
