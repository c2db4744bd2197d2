//! Append-only decision log: one JSON record per line, fsynced before acknowledgment.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ReviewDecision, Verdict};
use crate::error::{Error, Result};

/// A decision before the log assigns its id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewDecision {
    pub queue_id: String,
    pub domain: String,
    pub verdict: Verdict,
    pub reviewer_id: String,
    pub timestamp: u64,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

/// What opening the log had to repair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogRecovery {
    /// Bytes of an incomplete trailing line that were dropped.
    pub truncated_bytes: u64,
}

#[derive(Debug)]
pub struct DecisionLog {
    path: PathBuf,
    file: File,
    decisions: Vec<ReviewDecision>,
    by_key: HashMap<String, usize>,
}

struct Parsed {
    decisions: Vec<ReviewDecision>,
    /// Length of the prefix made of complete, valid lines.
    valid_len: u64,
}

fn parse(bytes: &[u8]) -> Result<Parsed> {
    let mut decisions = Vec::new();
    let mut offset = 0usize;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            // No terminating newline: a write torn by a crash.
            break;
        };
        let line = &bytes[offset..offset + nl];
        offset += nl + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let d: ReviewDecision = serde_json::from_slice(line).map_err(|e| Error::Malformed {
            line: line_no,
            message: format!("decision log: {e}"),
        })?;
        if let Some(prev) = decisions.last().map(|p: &ReviewDecision| p.decision_id) {
            if d.decision_id <= prev {
                return Err(Error::Malformed {
                    line: line_no,
                    message: format!("decision id {} not above previous {prev}", d.decision_id),
                });
            }
        }
        decisions.push(d);
    }
    Ok(Parsed {
        decisions,
        valid_len: offset as u64,
    })
}

impl DecisionLog {
    /// Opens or creates the log, dropping a torn trailing line if present.
    pub fn open(path: impl AsRef<Path>) -> Result<(DecisionLog, LogRecovery)> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)
            .map_err(|e| Error::io(&path, e))?;
        let parsed = parse(&bytes)?;
        let mut recovery = LogRecovery::default();
        if parsed.valid_len < bytes.len() as u64 {
            recovery.truncated_bytes = bytes.len() as u64 - parsed.valid_len;
            tracing::warn!(
                path = %path.display(),
                bytes = recovery.truncated_bytes,
                "ignoring incomplete trailing line in decision log"
            );
            file.set_len(parsed.valid_len)
                .map_err(|e| Error::io(&path, e))?;
            file.sync_all().map_err(|e| Error::io(&path, e))?;
        }
        file.seek(SeekFrom::End(0))
            .map_err(|e| Error::io(&path, e))?;
        let by_key = parsed
            .decisions
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.idempotency_key.clone().map(|k| (k, i)))
            .collect();
        Ok((
            DecisionLog {
                path,
                file,
                decisions: parsed.decisions,
                by_key,
            },
            recovery,
        ))
    }

    /// Reads a log without repairing it; an incomplete trailing line is ignored.
    pub fn read(path: impl AsRef<Path>) -> Result<Vec<ReviewDecision>> {
        let path = path.as_ref();
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(path, e)),
        };
        Ok(parse(&bytes)?.decisions)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn decisions(&self) -> &[ReviewDecision] {
        &self.decisions
    }

    pub fn next_id(&self) -> u64 {
        self.decisions.last().map_or(1, |d| d.decision_id + 1)
    }

    /// Appends and fsyncs a decision. A repeated idempotency key returns the stored
    /// record and `false` without writing.
    pub fn append(&mut self, new: NewDecision) -> Result<(ReviewDecision, bool)> {
        if let Some(&i) = new
            .idempotency_key
            .as_ref()
            .and_then(|k| self.by_key.get(k))
        {
            return Ok((self.decisions[i].clone(), false));
        }
        let decision = ReviewDecision {
            decision_id: self.next_id(),
            queue_id: new.queue_id,
            domain: new.domain,
            verdict: new.verdict,
            reviewer_id: new.reviewer_id,
            timestamp: new.timestamp,
            note: new.note,
            idempotency_key: new.idempotency_key,
        };
        let mut line = serde_json::to_vec(&decision).expect("decision serializes");
        line.push(b'\n');
        let before = self
            .file
            .metadata()
            .map_err(|e| Error::io(&self.path, e))?
            .len();
        let written = self
            .file
            .write_all(&line)
            .and_then(|_| self.file.sync_data());
        if let Err(e) = written {
            // Leave no partial record behind; the caller may retry.
            let _ = self.file.set_len(before);
            return Err(Error::io(&self.path, e));
        }
        if let Some(k) = &decision.idempotency_key {
            self.by_key.insert(k.clone(), self.decisions.len());
        }
        self.decisions.push(decision.clone());
        Ok((decision, true))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn new(domain: &str, key: Option<&str>) -> NewDecision {
        NewDecision {
            queue_id: "q".into(),
            domain: domain.into(),
            verdict: Verdict::Blocklist,
            reviewer_id: "r".into(),
            timestamp: 1,
            note: None,
            idempotency_key: key.map(String::from),
        }
    }

    #[test]
    fn ids_are_monotone_and_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decisions.log");
        {
            let (mut log, _) = DecisionLog::open(&path).unwrap();
            for d in ["a", "b", "c"] {
                log.append(new(d, None)).unwrap();
            }
        }
        let (log, rec) = DecisionLog::open(&path).unwrap();
        assert_eq!(rec, LogRecovery::default());
        let ids: Vec<u64> = log.decisions().iter().map(|d| d.decision_id).collect();
        assert_eq!(ids, [1, 2, 3]);
        assert_eq!(log.next_id(), 4);
    }

    #[test]
    fn idempotency_key_deduplicates_across_restarts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.log");
        let (mut log, _) = DecisionLog::open(&path).unwrap();
        let (first, created) = log.append(new("a", Some("k1"))).unwrap();
        assert!(created);
        let (again, created) = log.append(new("a", Some("k1"))).unwrap();
        assert!(!created);
        assert_eq!(first, again);
        drop(log);
        let (mut log, _) = DecisionLog::open(&path).unwrap();
        let (_, created) = log.append(new("a", Some("k1"))).unwrap();
        assert!(!created);
        assert_eq!(log.decisions().len(), 1);
    }

    #[test]
    fn torn_trailing_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.log");
        {
            let (mut log, _) = DecisionLog::open(&path).unwrap();
            log.append(new("a", None)).unwrap();
            log.append(new("b", None)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"decision_id":3,"queue_id":"q","dom"#)
            .unwrap();
        drop(f);
        assert_eq!(DecisionLog::read(&path).unwrap().len(), 2);
        let (mut log, rec) = DecisionLog::open(&path).unwrap();
        assert!(rec.truncated_bytes > 0);
        assert_eq!(log.decisions().len(), 2);
        let (d, _) = log.append(new("c", None)).unwrap();
        assert_eq!(d.decision_id, 3);
        drop(log);
        assert_eq!(DecisionLog::read(&path).unwrap().len(), 3);
    }

    #[test]
    fn corruption_before_the_tail_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.log");
        std::fs::write(&path, "garbage\n").unwrap();
        assert!(matches!(
            DecisionLog::open(&path),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn missing_log_reads_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(DecisionLog::read(dir.path().join("none.log"))
            .unwrap()
            .is_empty());
    }
}
