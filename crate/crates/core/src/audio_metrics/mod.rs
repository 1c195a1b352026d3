//! Objective music-generation metrics: Fréchet audio distance over embedding
//! statistics and KL divergence between classifier label distributions.

mod files;
mod frechet;
mod kl;

pub use files::{
    read_embedding_file, read_label_file, write_embedding_file, write_label_file,
    EmbeddingDescriptor,
};
pub use frechet::{
    embedding_stats, frechet_distance, sqrtm_psd, EmbeddingSet, EmbeddingSetStats,
    COVARIANCE_EPSILON,
};
pub use kl::{corpus_kl, label_kl, LabelDistribution, DEFAULT_KL_EPS};

use crate::error::Result;

/// Audio → frame-level embeddings (VGGish-style backends).
pub trait AudioEmbedder: Send + Sync {
    fn identity(&self) -> String;
    fn embed(&self, samples: &[f32], sample_rate: u32) -> Result<Vec<Vec<f64>>>;
}

/// Audio → probability distribution over a fixed label set (PaSST-style
/// backends).
pub trait AudioClassifier: Send + Sync {
    fn identity(&self) -> String;
    fn num_labels(&self) -> usize;
    fn classify(&self, samples: &[f32], sample_rate: u32) -> Result<Vec<f64>>;
}
