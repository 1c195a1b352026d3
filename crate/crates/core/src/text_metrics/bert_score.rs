use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenize::TokenSequence;
use crate::error::{Error, Result};

/// Maps a token sequence to one vector per token.
pub trait TokenEmbedder: Send + Sync {
    fn identity(&self) -> &str;
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Deterministic embedder: each token type gets a fixed Gaussian direction
/// seeded from its SHA-256 digest. Identical tokens share a vector; distinct
/// tokens are nearly orthogonal for large `dim`.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    identity: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            identity: format!("hash-embedder/v1/dim={dim}"),
        }
    }

    fn vector(&self, token: &str) -> Vec<f64> {
        let digest = Sha256::digest(token.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let v: Vec<f64> = (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl TokenEmbedder for HashEmbedder {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(tokens.iter().map(|t| self.vector(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    tokens: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for an external contextual encoder. POSTs `{"tokens": [...]}` and
/// expects `{"vectors": [[...], ...]}` with one vector per token.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    endpoint: String,
    identity: String,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let endpoint = endpoint.into();
        Self {
            identity: format!("http-embedder:{endpoint}"),
            endpoint,
        }
    }
}

impl TokenEmbedder for HttpEmbedder {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = serde_json::to_string(&EmbedRequest { tokens })?;
        let mut resp = ureq::post(&self.endpoint)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| Error::invalid(format!("{}: {e}", self.identity)))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::invalid(format!("{}: {e}", self.identity)))?;
        let parsed: EmbedResponse = serde_json::from_str(&text)?;
        if parsed.vectors.len() != tokens.len() {
            return Err(Error::invalid(format!(
                "{}: expected {} vectors, got {}",
                self.identity,
                tokens.len(),
                parsed.vectors.len()
            )));
        }
        Ok(parsed.vectors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BertScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl BertScore {
    const ZERO: BertScore = BertScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
}

/// Greedy matching on a `[hyp, ref]` cosine-similarity matrix. Negative
/// best-match similarities count as zero so scores stay in `[0, 1]`.
pub fn bert_score_from_similarity(sim: &[Vec<f64>]) -> BertScore {
    let rows = sim.len();
    let cols = sim.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return BertScore::ZERO;
    }
    let precision = sim
        .iter()
        .map(|row| {
            row.iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
                .max(0.0)
        })
        .sum::<f64>()
        / rows as f64;
    let recall = (0..cols)
        .map(|j| {
            sim.iter()
                .map(|row| row[j])
                .fold(f64::NEG_INFINITY, f64::max)
                .max(0.0)
        })
        .sum::<f64>()
        / cols as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    BertScore {
        precision: precision.min(1.0),
        recall: recall.min(1.0),
        f1: f1.min(1.0),
    }
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::Numerical(
            "embedder returned a zero or non-finite vector".into(),
        ));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn bert_score(
    hyp: &TokenSequence,
    reference: &TokenSequence,
    embedder: &dyn TokenEmbedder,
) -> Result<BertScore> {
    if hyp.is_empty() || reference.is_empty() {
        return Ok(BertScore::ZERO);
    }
    let h = embedder.embed(&hyp.tokens)?;
    let r = embedder.embed(&reference.tokens)?;
    if h.len() != hyp.len() || r.len() != reference.len() {
        return Err(Error::invalid(format!(
            "embedder {} returned the wrong number of vectors",
            embedder.identity()
        )));
    }
    let h = h.iter().map(|v| unit(v)).collect::<Result<Vec<_>>>()?;
    let r = r.iter().map(|v| unit(v)).collect::<Result<Vec<_>>>()?;
    let sim: Vec<Vec<f64>> = h
        .iter()
        .map(|hv| {
            r.iter()
                .map(|rv| hv.iter().zip(rv).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(bert_score_from_similarity(&sim))
}
