//! Adapter-only fine-tuning on (features, question, answer) triples, answer
//! decoding, checkpoints and caption-metric evaluation.

mod adam;
mod checkpoint;
mod decode;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use checkpoint::{BackboneRef, Checkpoint, TrainingMetadata, CHECKPOINT_FORMAT};
pub use decode::{decode_answer, decode_ids, DecodeConfig, DecodeStrategy};

use crate::adapter::{AudioFeatureStack, SceneModel, TokenizedSample, EOS};
use crate::corpus::CaptionBundle;
use crate::error::{Error, Result};
use crate::report::MetricReport;
use crate::text_metrics::{corpus_report, tokenize, TokenEmbedder};

pub const DEFAULT_QUESTION: &str = "what kinds of video would this piece of music be suitable for?";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub question_template: String,
    pub lr_schedule: LrSchedule,
}

/// Learning rate over the course of training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from `learning_rate` at the first step to zero after the
    /// last.
    Cosine,
}

impl LrSchedule {
    /// Rate for 0-based optimizer step `step` of `total`.
    pub fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            Self::Constant => base,
            Self::Cosine => {
                0.5 * base * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
            }
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 4,
            learning_rate: 1e-2,
            seed: 0,
            train_fraction: 0.8,
            question_template: DEFAULT_QUESTION.to_string(),
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_time_s: f64,
}

/// One question/answer example about a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct MsiSample {
    pub features: AudioFeatureStack,
    pub question: String,
    pub answer: String,
}

impl MsiSample {
    pub fn clip_id(&self) -> &str {
        &self.features.clip_id
    }
}

/// Pairs each bundle's scene caption with `<features_dir>/<clip>.npy`.
pub fn samples_from_bundles(
    bundles: &[CaptionBundle],
    features_dir: &Path,
    question: &str,
) -> Result<Vec<MsiSample>> {
    bundles
        .iter()
        .map(|b| {
            let path = features_dir.join(format!("{}.npy", crate::io::file_stem_for(&b.clip_id)));
            let (features, _) = AudioFeatureStack::read(&path)?;
            if features.clip_id != b.clip_id {
                return Err(Error::invalid(format!(
                    "{} holds features for {:?}, expected {:?}",
                    path.display(),
                    features.clip_id,
                    b.clip_id
                )));
            }
            Ok(MsiSample {
                features,
                question: question.to_string(),
                answer: b.msi_caption.clone(),
            })
        })
        .collect()
}

/// Trains the adapter in place. One log entry per epoch; `mean_loss` is
/// the token-weighted mean of the batch losses seen during that epoch.
pub fn train(
    dataset: &[MsiSample],
    model: &mut SceneModel,
    config: &TrainConfig,
) -> Result<(Checkpoint, Vec<TrainLogEntry>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let vocab = model.lm().vocab().clone();
    let encoded: Vec<(Vec<u32>, Vec<u32>)> = dataset
        .iter()
        .map(|s| {
            let mut answer = vocab.encode(&s.answer);
            if answer.is_empty() {
                return Err(Error::invalid(format!(
                    "empty answer for clip {:?}",
                    s.clip_id()
                )));
            }
            answer.push(EOS);
            Ok((vocab.encode(&s.question), answer))
        })
        .collect::<Result<_>>()?;

    let digest_before = model.lm().weight_digest().to_string();
    let vars: Vec<_> = model.params.vars().into_iter().cloned().collect();
    let var_refs: Vec<_> = vars.iter().collect();
    let mut optimizer = Adam::new(&var_refs, config.learning_rate)?;
    let start = Instant::now();
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let total_steps = config.epochs * dataset.len().div_ceil(config.batch_size);
    let mut global_step = 0;

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let (mut weighted, mut tokens) = (0.0, 0usize);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<TokenizedSample<'_>> = chunk
                .iter()
                .map(|&i| TokenizedSample {
                    features: &dataset[i].features,
                    question: &encoded[i].0,
                    answer: &encoded[i].1,
                })
                .collect();
            let (loss, count) = model.batch_loss(&batch)?;
            let value = loss.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let grads = loss.backward()?;
            optimizer.learning_rate =
                config
                    .lr_schedule
                    .rate(config.learning_rate, global_step, total_steps);
            optimizer.step(&var_refs, &grads)?;
            global_step += 1;
            weighted += value * count as f64;
            tokens += count;
        }
        let entry = TrainLogEntry {
            epoch,
            mean_loss: weighted / tokens as f64,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}/{}: mean loss {:.6}",
            config.epochs,
            entry.mean_loss
        );
        log.push(entry);
    }

    if model.lm().recompute_digest()? != digest_before {
        return Err(Error::Numerical(
            "backbone weights changed during training".into(),
        ));
    }
    let metadata = TrainingMetadata {
        train_config: config.clone(),
        num_samples: dataset.len(),
        loss_curve: log.iter().map(|e| e.mean_loss).collect(),
    };
    Ok((Checkpoint::from_model(model, Some(metadata))?, log))
}

/// Decodes every sample's question, in input order.
pub fn decode_all(
    model: &SceneModel,
    samples: &[MsiSample],
    config: &DecodeConfig,
) -> Result<Vec<String>> {
    samples
        .par_iter()
        .map(|s| decode_answer(model, &s.features, &s.question, config))
        .collect()
}

/// Fraction of samples whose decoded answer has exactly the reference's
/// token sequence.
pub fn exact_match_rate(
    model: &SceneModel,
    samples: &[MsiSample],
    config: &DecodeConfig,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hyps = decode_all(model, samples, config)?;
    let hits = hyps
        .iter()
        .zip(samples)
        .filter(|(h, s)| tokenize(h).tokens == tokenize(&s.answer).tokens)
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Decodes an answer per test clip and scores it against the reference
/// scene caption. The single report row is keyed by the model identity.
pub fn evaluate_checkpoint(
    model: &SceneModel,
    test: &[MsiSample],
    decode: &DecodeConfig,
    embedder: &dyn TokenEmbedder,
) -> Result<MetricReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hyps = decode_all(model, test, decode)?;
    let pairs: Vec<(String, String)> = hyps
        .into_iter()
        .zip(test.iter().map(|s| s.answer.clone()))
        .collect();
    corpus_report(&model.identity()?, &pairs, embedder)
}
