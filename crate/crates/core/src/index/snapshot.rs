//! On-disk snapshot: `<prefix>.records.jsonl` (one canonical record per line,
//! id order) plus `<prefix>.meta.json`. Postings are never written; they are
//! rebuilt from the records on load.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{IndexState, UnifiedIndex};
use crate::corpus::{dedup_key, Opportunity};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub format_version: u32,
    pub doc_count: usize,
    /// Time of the last index mutation captured by this snapshot. Saving an
    /// unmodified index twice therefore produces identical bytes.
    pub saved_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub count: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("snapshot io error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("snapshot format error: {0}")]
    Format(String),
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn records_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, ".records.jsonl")
}

pub fn meta_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, ".meta.json")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io { path: path.to_path_buf(), source }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), SnapshotError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = with_suffix(path, ".tmp");
    let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(bytes).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl UnifiedIndex {
    /// Writes the snapshot under the read lock and returns the record count.
    pub fn save_snapshot(&self, prefix: &Path) -> Result<usize, SnapshotError> {
        let state = self.state.read();
        let mut body = String::new();
        for doc in state.docs.values() {
            body.push_str(&doc.stored.to_json_line());
            body.push('\n');
        }
        let meta = SnapshotMeta {
            format_version: SNAPSHOT_FORMAT_VERSION,
            doc_count: state.docs.len(),
            saved_at: state.last_modified,
        };
        let mut meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
        meta_json.push('\n');
        write_atomically(&records_path(prefix), body.as_bytes())?;
        write_atomically(&meta_path(prefix), meta_json.as_bytes())?;
        Ok(meta.doc_count)
    }

    /// Replaces the index contents with the snapshot at `prefix`.
    ///
    /// Malformed lines are skipped with a warning rather than failing the
    /// load. Only an unreadable records file is an error.
    pub fn load_snapshot(&self, prefix: &Path) -> Result<LoadReport, SnapshotError> {
        let records_file = records_path(prefix);
        let file = fs::File::open(&records_file).map_err(io_err(&records_file))?;
        let mut report = LoadReport::default();
        let mut records: Vec<Opportunity> = Vec::new();

        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(&records_file))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Opportunity>(&line) {
                Ok(opp) if opp.id != dedup_key(&opp.title, &opp.url) => {
                    report.warnings.push(format!("line {}: id does not match its title/url, skipped", n + 1));
                }
                Ok(opp) => records.push(opp),
                Err(e) => report.warnings.push(format!("line {}: malformed record skipped ({e})", n + 1)),
            }
        }

        let meta_file = meta_path(prefix);
        let meta = match fs::read_to_string(&meta_file) {
            Ok(text) => match serde_json::from_str::<SnapshotMeta>(&text) {
                Ok(meta) => Some(meta),
                Err(e) => {
                    report.warnings.push(format!("meta file unreadable ({e})"));
                    None
                }
            },
            Err(_) => {
                report.warnings.push("meta file missing".to_string());
                None
            }
        };
        if let Some(meta) = &meta {
            if meta.format_version != SNAPSHOT_FORMAT_VERSION {
                return Err(SnapshotError::Format(format!(
                    "unsupported snapshot format_version {} (expected {SNAPSHOT_FORMAT_VERSION})",
                    meta.format_version
                )));
            }
        }

        let mut state = IndexState::from_records(records);
        report.count = state.docs.len();
        state.last_modified = meta.and_then(|m| m.saved_at);
        *self.state.write() = state;
        Ok(report)
    }

    /// True when both snapshot files are present.
    pub fn snapshot_exists(prefix: &Path) -> bool {
        records_path(prefix).is_file()
    }
}
