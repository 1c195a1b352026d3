use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::CaptionStrategy;
use crate::error::{Error, Result};

pub const LEDGER_FILE: &str = "ledger.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum GenerationStatus {
    Ok {
        /// Relative to the ledger directory.
        audio_path: String,
        sha256: String,
        audio_duration_s: f64,
    },
    Failed {
        error: String,
        attempts: u32,
    },
}

/// One generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub clip_id: String,
    pub strategy: CaptionStrategy,
    pub caption: String,
    pub seed: u64,
    pub backend: String,
    pub duration_s: f64,
    /// Locator of the clip's original soundtrack, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(flatten)]
    pub status: GenerationStatus,
}

impl LedgerEntry {
    pub fn is_ok(&self) -> bool {
        matches!(self.status, GenerationStatus::Ok { .. })
    }
}

/// Append-only JSON Lines log of generation calls. Appends are serialised by
/// a mutex and fsynced before returning.
#[derive(Debug)]
pub struct Ledger {
    dir: PathBuf,
    inner: Mutex<Inner>,
}

#[derive(Debug)]
struct Inner {
    file: File,
    entries: Vec<LedgerEntry>,
}

impl Ledger {
    /// Opens or creates `<dir>/ledger.jsonl`. A torn final line left by an
    /// interrupted append is discarded.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LEDGER_FILE);
        let mut text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::io(&path, e)),
        };
        if !text.is_empty() && !text.ends_with('\n') {
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            text.truncate(keep);
            let f = OpenOptions::new()
                .write(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            f.set_len(keep as u64).map_err(|e| Error::io(&path, e))?;
            f.sync_all().map_err(|e| Error::io(&path, e))?;
        }
        let entries = parse(&path, &text)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            inner: Mutex::new(Inner { file, entries }),
        })
    }

    /// Reads the entries of an existing ledger without opening it for append.
    pub fn read(dir: &Path) -> Result<Vec<LedgerEntry>> {
        let path = dir.join(LEDGER_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let complete = text.rfind('\n').map_or("", |i| &text[..=i]);
        parse(&path, complete)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&self, entry: &LedgerEntry) -> Result<()> {
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        let path = self.dir.join(LEDGER_FILE);
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner
            .file
            .write_all(&line)
            .map_err(|e| Error::io(&path, e))?;
        inner.file.sync_data().map_err(|e| Error::io(&path, e))?;
        inner.entries.push(entry.clone());
        Ok(())
    }

    pub fn entries(&self) -> Vec<LedgerEntry> {
        self.inner
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .entries
            .clone()
    }

    /// The latest successful entry for a clip and strategy.
    pub fn latest_ok(&self, clip_id: &str, strategy: CaptionStrategy) -> Option<LedgerEntry> {
        let inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner
            .entries
            .iter()
            .rev()
            .find(|e| e.is_ok() && e.clip_id == clip_id && e.strategy == strategy)
            .cloned()
    }
}

fn parse(path: &Path, text: &str) -> Result<Vec<LedgerEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(clip: &str, status: GenerationStatus) -> LedgerEntry {
        LedgerEntry {
            clip_id: clip.into(),
            strategy: CaptionStrategy::Msi,
            caption: "c".into(),
            seed: 1,
            backend: "b".into(),
            duration_s: 10.0,
            reference: None,
            status,
        }
    }

    fn ok() -> GenerationStatus {
        GenerationStatus::Ok {
            audio_path: "audio/msi/a.wav".into(),
            sha256: "00".into(),
            audio_duration_s: 10.0,
        }
    }

    #[test]
    fn reopen_sees_previous_appends() {
        let dir = tempfile::tempdir().unwrap();
        let l = Ledger::open(dir.path()).unwrap();
        l.append(&entry("a", ok())).unwrap();
        l.append(&entry(
            "b",
            GenerationStatus::Failed {
                error: "down".into(),
                attempts: 3,
            },
        ))
        .unwrap();
        drop(l);
        let l = Ledger::open(dir.path()).unwrap();
        assert_eq!(l.entries().len(), 2);
        assert!(l.latest_ok("a", CaptionStrategy::Msi).is_some());
        assert!(l.latest_ok("b", CaptionStrategy::Msi).is_none());
        let line = fs::read_to_string(dir.path().join(LEDGER_FILE)).unwrap();
        assert!(line.contains("\"status\":\"failed\""));
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let l = Ledger::open(dir.path()).unwrap();
        l.append(&entry("a", ok())).unwrap();
        drop(l);
        let path = dir.path().join(LEDGER_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"clip_id\":\"b\",\"stra").unwrap();
        drop(f);
        assert_eq!(Ledger::read(dir.path()).unwrap().len(), 1);
        let l = Ledger::open(dir.path()).unwrap();
        l.append(&entry("c", ok())).unwrap();
        assert_eq!(Ledger::read(dir.path()).unwrap().len(), 2);
    }
}
