use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::{AudioFeatureStack, SceneModel, EOS};
use crate::error::{Error, Result};
use crate::text_metrics::detokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum DecodeStrategy {
    /// Argmax, ties broken toward the lower token id.
    Greedy,
    Sample {
        temperature: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub max_len: usize,
    #[serde(flatten)]
    pub strategy: DecodeStrategy,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_len: 32,
            strategy: DecodeStrategy::Greedy,
        }
    }
}

fn argmax(log_probs: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &v) in log_probs.iter().enumerate() {
        if v > log_probs[best] {
            best = i;
        }
    }
    best as u32
}

fn sample(log_probs: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> u32 {
    let scaled: Vec<f64> = log_probs.iter().map(|lp| lp / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i as u32;
        }
        u -= w;
    }
    argmax(log_probs)
}

/// Generated answer ids (without the terminating `<eos>`).
pub fn decode_ids(
    model: &SceneModel,
    features: &AudioFeatureStack,
    question: &[u32],
    config: &DecodeConfig,
) -> Result<Vec<u32>> {
    if config.max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    let mut rng = match &config.strategy {
        DecodeStrategy::Greedy => None,
        DecodeStrategy::Sample { temperature, seed } => {
            if !(*temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::invalid(format!(
                    "temperature must be positive, got {temperature}"
                )));
            }
            Some(ChaCha8Rng::seed_from_u64(*seed))
        }
    };
    let prefix = model.prefix(features)?;
    let mut tokens = question.to_vec();
    let mut answer = Vec::new();
    while answer.len() < config.max_len {
        let lp = model.next_token_log_probs(&prefix, &tokens)?;
        let next = match (&config.strategy, rng.as_mut()) {
            (DecodeStrategy::Sample { temperature, .. }, Some(rng)) => {
                sample(&lp, *temperature, rng)
            }
            _ => argmax(&lp),
        };
        if next == EOS {
            break;
        }
        answer.push(next);
        tokens.push(next);
    }
    Ok(answer)
}

/// Answers `question` about the clip behind `features` as text.
pub fn decode_answer(
    model: &SceneModel,
    features: &AudioFeatureStack,
    question: &str,
    config: &DecodeConfig,
) -> Result<String> {
    let vocab = model.lm().vocab();
    let ids = decode_ids(model, features, &vocab.encode(question), config)?;
    Ok(detokenize(&vocab.decode(&ids)))
}
