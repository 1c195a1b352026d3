//! File plumbing shared by every module: atomic writes, JSON Lines, and the
//! `.npy` array container (with a JSON sidecar) used for features and
//! embeddings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Writes `bytes` to a temp file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Serialises one item per line. Quotes and newlines inside strings are
/// escaped by the JSON encoder, so every record occupies exactly one line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_atomic(path, &to_jsonl(items)?)
}

/// Parses a JSON Lines file, returning each record with its 1-based line
/// number. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

/// Path of the JSON descriptor that accompanies an array file.
pub fn sidecar_path(array_path: &Path) -> PathBuf {
    array_path.with_extension("json")
}

/// A dense row-major `f32` array as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFile {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl ArrayFile {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn to_npy_bytes(&self) -> Result<Vec<u8>> {
        use npyz::WriterBuilder;
        let shape: Vec<u64> = self.shape.iter().map(|&d| d as u64).collect();
        let mut buf = Vec::new();
        {
            let mut writer = npyz::WriteOptions::new()
                .default_dtype()
                .shape(&shape)
                .writer(&mut buf)
                .begin_nd()
                .map_err(|e| Error::io("<npy buffer>", e))?;
            writer
                .extend(self.data.iter().copied())
                .map_err(|e| Error::io("<npy buffer>", e))?;
            writer.finish().map_err(|e| Error::io("<npy buffer>", e))?;
        }
        Ok(buf)
    }

    pub fn from_npy_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let npy = npyz::NpyFile::new(bytes).map_err(|e| Error::io(origin, e))?;
        if npy.order() != npyz::Order::C {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: 0,
                message: "fortran-ordered arrays are not supported".into(),
            });
        }
        let shape: Vec<usize> = npy.shape().iter().map(|&d| d as usize).collect();
        let data = npy.into_vec::<f32>().map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            message: format!("expected little-endian float32 data: {e}"),
        })?;
        Self::new(shape, data)
    }

    /// Writes the `.npy` file and its JSON sidecar.
    pub fn write<D: Serialize>(&self, path: &Path, descriptor: &D) -> Result<()> {
        write_atomic(path, &self.to_npy_bytes()?)?;
        write_json(&sidecar_path(path), descriptor)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_npy_bytes(&bytes, path)
    }

    pub fn read_with_sidecar<D: DeserializeOwned>(path: &Path) -> Result<(Self, D)> {
        let array = Self::read(path)?;
        let descriptor = read_json(&sidecar_path(path))?;
        Ok((array, descriptor))
    }
}

/// Replaces every character outside `[A-Za-z0-9._-]` so an identifier can be
/// used as a file name.
pub fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}
