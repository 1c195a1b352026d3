use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Content-addressed response cache.
///
/// `index/<key>` holds the SHA-256 of the response and `content/<hash>`
/// holds the response itself, where `key = sha256(backend ‖ 0x00 ‖ input)`.
/// Index entries are created with an atomic no-clobber rename. A second
/// writer with the same content is a no-op; different content under an
/// existing key is a [`Error::CacheConflict`].
#[derive(Debug, Clone)]
pub struct ContentCache {
    root: PathBuf,
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

impl ContentCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["index", "content"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn key(backend: &str, input: &str) -> String {
        sha256_hex(&[backend.as_bytes(), &[0], input.as_bytes()])
    }

    fn index_path(&self, key: &str) -> PathBuf {
        self.root.join("index").join(key)
    }

    fn content_path(&self, hash: &str) -> PathBuf {
        self.root.join("content").join(hash)
    }

    pub fn get(&self, backend: &str, input: &str) -> Result<Option<String>> {
        let index = self.index_path(&Self::key(backend, input));
        let hash = match fs::read_to_string(&index) {
            Ok(h) => h,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&index, e)),
        };
        let path = self.content_path(hash.trim());
        let value = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&[value.as_bytes()]) != hash.trim() {
            return Err(Error::invalid(format!(
                "cache entry {} is corrupt",
                path.display()
            )));
        }
        Ok(Some(value))
    }

    fn write_noclobber(&self, path: &Path, bytes: &[u8]) -> Result<bool> {
        let dir = path.parent().expect("cache paths have a parent");
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
        tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
        match tmp.persist_noclobber(path) {
            Ok(_) => Ok(true),
            Err(e) if e.error.kind() == ErrorKind::AlreadyExists => Ok(false),
            Err(e) => Err(Error::io(path, e.error)),
        }
    }

    pub fn put(&self, backend: &str, input: &str, value: &str) -> Result<()> {
        let key = Self::key(backend, input);
        let hash = sha256_hex(&[value.as_bytes()]);
        self.write_noclobber(&self.content_path(&hash), value.as_bytes())?;
        let index = self.index_path(&key);
        if !self.write_noclobber(&index, hash.as_bytes())? {
            let existing = fs::read_to_string(&index).map_err(|e| Error::io(&index, e))?;
            if existing.trim() != hash {
                return Err(Error::CacheConflict { key });
            }
        }
        Ok(())
    }
}
