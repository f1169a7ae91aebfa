//! Append-only persistence, one log file per user.
//!
//! Each file starts with a version line followed by one JSON record per line.
//! The in-memory state is rebuilt by replaying every file at startup. A
//! truncated final line (from a crash mid-append) is dropped with a warning;
//! damage anywhere else is an error.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::wire::WireEvent;

pub const STORE_HEADER: &str = "keydetect-store 1";
const EXTENSION: &str = "log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Record {
    Enroll { nonce: String, events: Vec<WireEvent> },
    Train { detector: String },
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_of(&self, user: &str) -> PathBuf {
        self.dir.join(format!("{user}.{EXTENSION}"))
    }

    /// Appends one record and syncs it to disk before returning.
    pub fn append(&self, user: &str, record: &Record) -> Result<()> {
        let path = self.path_of(user);
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut line = String::new();
        if file.metadata()?.len() == 0 {
            line.push_str(STORE_HEADER);
            line.push('\n');
        }
        line.push_str(&serde_json::to_string(record).map_err(|e| ServiceError::Store(e.to_string()))?);
        line.push('\n');
        file.write_all(line.as_bytes())?;
        file.sync_data()?;
        Ok(())
    }

    /// Reads every user log, sorted by user id.
    pub fn load_all(&self) -> Result<Vec<(String, Vec<Record>)>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some(EXTENSION) {
                continue;
            }
            let Some(user) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            out.push((user.to_string(), read_log(&path)?));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}

fn read_log(path: &Path) -> Result<Vec<Record>> {
    let bad = |what: String| ServiceError::Store(format!("{}: {what}", path.display()));
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<std::io::Result<_>>()?;
    match lines.first() {
        Some(h) if h == STORE_HEADER => {}
        Some(h) => return Err(bad(format!("unsupported header {h:?}"))),
        None => return Ok(Vec::new()),
    }
    let mut records = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => records.push(r),
            Err(e) if i + 1 == lines.len() => {
                log::warn!("{}: dropping truncated last record ({e})", path.display());
            }
            Err(e) => return Err(bad(format!("line {}: {e}", i + 1))),
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::WireKind;

    fn enroll(nonce: &str) -> Record {
        Record::Enroll {
            nonce: nonce.into(),
            events: vec![WireEvent {
                key: "t".into(),
                kind: WireKind::Down,
                t_ms: 3,
            }],
        }
    }

    #[test]
    fn append_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.append("bob", &enroll("a")).unwrap();
        store.append("alice", &enroll("b")).unwrap();
        store
            .append(
                "bob",
                &Record::Train {
                    detector: "manhattan".into(),
                },
            )
            .unwrap();
        let all = store.load_all().unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].0, "alice");
        assert_eq!(all[1].1.len(), 2);
        assert_eq!(all[1].1[0], enroll("a"));
        let text = fs::read_to_string(dir.path().join("bob.log")).unwrap();
        assert!(text.starts_with("keydetect-store 1\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn truncated_tail_dropped_but_middle_damage_fails() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.append("u", &enroll("a")).unwrap();
        let path = dir.path().join("u.log");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"op\":\"enr").unwrap();
        assert_eq!(store.load_all().unwrap()[0].1.len(), 1);

        f.write_all(b"\n").unwrap();
        store.append("u", &enroll("b")).unwrap();
        assert!(matches!(store.load_all(), Err(ServiceError::Store(_))));
    }

    #[test]
    fn foreign_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.log"), "keydetect-store 9\n").unwrap();
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        assert!(Store::open(dir.path()).unwrap().load_all().is_err());
    }
}
