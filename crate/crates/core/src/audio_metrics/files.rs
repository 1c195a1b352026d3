use std::path::Path;

use serde::{Deserialize, Serialize};

use super::frechet::EmbeddingSet;
use super::kl::LabelDistribution;
use crate::error::{Error, Result};
use crate::io::{self, ArrayFile};

/// Sidecar stored next to an embedding `.npy` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDescriptor {
    pub embedder: String,
    pub source_id: String,
    #[serde(default)]
    pub clip_ids: Vec<String>,
}

pub fn write_embedding_file(
    path: &Path,
    set: &EmbeddingSet,
    descriptor: &EmbeddingDescriptor,
) -> Result<()> {
    let (rows, cols) = set.vectors.shape();
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            data.push(set.vectors[(i, j)] as f32);
        }
    }
    ArrayFile::new(vec![rows, cols], data)?.write(path, descriptor)
}

pub fn read_embedding_file(path: &Path) -> Result<(EmbeddingSet, EmbeddingDescriptor)> {
    let (array, descriptor): (ArrayFile, EmbeddingDescriptor) = ArrayFile::read_with_sidecar(path)?;
    let [rows, cols] = array.shape[..] else {
        return Err(Error::Shape(format!(
            "{}: embedding file must be 2-D, got shape {:?}",
            path.display(),
            array.shape
        )));
    };
    let vectors = nalgebra::DMatrix::from_fn(rows, cols, |i, j| array.data[i * cols + j] as f64);
    let set = EmbeddingSet {
        vectors,
        source_id: descriptor.source_id.clone(),
    };
    Ok((set, descriptor))
}

pub fn write_label_file(path: &Path, labels: &[LabelDistribution]) -> Result<()> {
    io::write_jsonl(path, labels)
}

pub fn read_label_file(path: &Path) -> Result<Vec<LabelDistribution>> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, l)| l).collect())
}
