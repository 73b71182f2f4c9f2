//! Append-only audit trail, one JSON object per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use photoguard_core::{AppRunState, ContentCategory, PolicyDecision, SystemStatus};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit log {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("audit log {path} line {line}: {source}")]
    Corrupt { path: PathBuf, line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    /// Milliseconds since the Unix epoch; never decreases along the log.
    pub timestamp_ms: u64,
    pub app_id: String,
    pub photo_path: String,
    pub system: SystemStatus,
    pub app_state: AppRunState,
    /// `None` for non-photos and for photos the classifier could not assess.
    pub category: Option<ContentCategory>,
    pub classifier_failed: bool,
    pub decision: PolicyDecision,
    pub prompt_id: Option<u64>,
    pub prompt_latency_ms: Option<u64>,
}

/// Everything but the sequence number and timestamp, which the log assigns.
#[derive(Debug, Clone)]
pub struct AuditRecord {
    pub app_id: String,
    pub photo_path: String,
    pub system: SystemStatus,
    pub app_state: AppRunState,
    pub category: Option<ContentCategory>,
    pub classifier_failed: bool,
    pub decision: PolicyDecision,
    pub prompt_id: Option<u64>,
    pub prompt_latency_ms: Option<u64>,
}

struct Inner {
    entries: Vec<AuditEntry>,
    file: Option<(PathBuf, File)>,
}

pub struct AuditLog {
    inner: Mutex<Inner>,
    clock: Box<dyn Fn() -> u64 + Send + Sync>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self::with_clock(None, Vec::new(), Box::new(crate::now_ms))
    }

    /// Opens `path` for appending, keeping any entries already in it.
    pub fn open(path: &Path) -> Result<Self, AuditError> {
        let io = |e| AuditError::Io { path: path.to_path_buf(), source: e };
        let mut entries = Vec::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry = serde_json::from_str(&line)
                    .map_err(|source| AuditError::Corrupt { path: path.to_path_buf(), line: i + 1, source })?;
                entries.push(entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self::with_clock(Some((path.to_path_buf(), file)), entries, Box::new(crate::now_ms)))
    }

    fn with_clock(file: Option<(PathBuf, File)>, entries: Vec<AuditEntry>, clock: Box<dyn Fn() -> u64 + Send + Sync>) -> Self {
        Self { inner: Mutex::new(Inner { entries, file }), clock }
    }

    #[cfg(test)]
    fn with_test_clock(clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        Self::with_clock(None, Vec::new(), Box::new(clock))
    }

    /// Appends `record`. The in-memory copy is updated even if the disk
    /// write fails; the error is returned so the caller can report it.
    pub fn append(&self, record: AuditRecord) -> (AuditEntry, Result<(), AuditError>) {
        let mut inner = self.inner.lock();
        let last = inner.entries.last().map(|e| (e.seq, e.timestamp_ms));
        let entry = AuditEntry {
            seq: last.map_or(1, |(s, _)| s + 1),
            timestamp_ms: (self.clock)().max(last.map_or(0, |(_, t)| t)),
            app_id: record.app_id,
            photo_path: record.photo_path,
            system: record.system,
            app_state: record.app_state,
            category: record.category,
            classifier_failed: record.classifier_failed,
            decision: record.decision,
            prompt_id: record.prompt_id,
            prompt_latency_ms: record.prompt_latency_ms,
        };
        let written = match &mut inner.file {
            Some((path, file)) => {
                let mut line = serde_json::to_string(&entry).expect("audit entries serialize");
                line.push('\n');
                file.write_all(line.as_bytes()).map_err(|e| AuditError::Io { path: path.clone(), source: e })
            }
            None => Ok(()),
        };
        inner.entries.push(entry.clone());
        (entry, written)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<AuditEntry> {
        self.inner.lock().entries.clone()
    }

    /// Entries with `timestamp_ms >= since`.
    pub fn since(&self, since: u64) -> Vec<AuditEntry> {
        let inner = self.inner.lock();
        let start = inner.entries.partition_point(|e| e.timestamp_ms < since);
        inner.entries[start..].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    fn record(app: &str) -> AuditRecord {
        AuditRecord {
            app_id: app.into(),
            photo_path: "/p.jpg".into(),
            system: SystemStatus::Locked,
            app_state: AppRunState::Background,
            category: Some(ContentCategory::Nude),
            classifier_failed: false,
            decision: PolicyDecision::new(photoguard_core::Verdict::Deny, photoguard_core::Reason::ScreenLocked).unwrap(),
            prompt_id: None,
            prompt_latency_ms: None,
        }
    }

    #[test]
    fn timestamps_never_go_backwards() {
        let ticks = [50u64, 40, 60, 10];
        let i = AtomicU64::new(0);
        let log = AuditLog::with_test_clock(move || ticks[i.fetch_add(1, Ordering::SeqCst) as usize]);
        let ts: Vec<u64> = (0..4).map(|_| log.append(record("a")).0.timestamp_ms).collect();
        assert_eq!(ts, [50, 50, 60, 60]);
        assert_eq!(log.since(60).len(), 2);
        assert_eq!(log.since(0).len(), 4);
        assert_eq!(log.since(61).len(), 0);
        assert_eq!(log.entries().iter().map(|e| e.seq).collect::<Vec<_>>(), [1, 2, 3, 4]);
    }

    #[test]
    fn reopening_continues_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        {
            let log = AuditLog::open(&path).unwrap();
            log.append(record("a")).1.unwrap();
            log.append(record("b")).1.unwrap();
        }
        let log = AuditLog::open(&path).unwrap();
        assert_eq!(log.len(), 2);
        let third = log.append(record("c")).0;
        assert_eq!(third.seq, 3);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        let parsed: AuditEntry = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        assert_eq!(parsed, third);
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        std::fs::write(&path, "{\"seq\":1}\n").unwrap();
        assert!(matches!(AuditLog::open(&path), Err(AuditError::Corrupt { line: 1, .. })));
    }
}
