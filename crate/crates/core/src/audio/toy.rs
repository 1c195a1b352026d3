use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AudioClip, MelSpectrogram};
use crate::adapter::AudioFeatureStack;
use crate::audio_metrics::{AudioClassifier, AudioEmbedder};
use crate::error::{Error, Result};

const N_FFT: usize = 1024;
const HOP: usize = 512;

/// Maps `log10` mel power into roughly [-2, 2].
fn normalise(log_power: f64) -> f64 {
    (log_power + 2.0) / 4.0
}

fn check_audio(samples: &[f32]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("empty audio"));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("audio contains non-finite samples"));
    }
    Ok(())
}

/// Layered encoder: `h₀` is the normalised log-mel frame and
/// `hₗ = tanh(Wₗ hₗ₋₁)` with fixed Gaussian weights drawn from `seed`.
/// Every `hₗ` is one layer of the output stack.
#[derive(Debug, Clone)]
pub struct ToyEncoder {
    pub num_layers: usize,
    pub feature_dim: usize,
    pub n_mels: usize,
    pub seed: u64,
    weights: Vec<Vec<f64>>,
}

impl ToyEncoder {
    pub fn new(num_layers: usize, feature_dim: usize, n_mels: usize, seed: u64) -> Result<Self> {
        if num_layers == 0 || feature_dim == 0 || n_mels == 0 {
            return Err(Error::invalid("toy encoder dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..num_layers)
            .map(|l| {
                let fan_in = if l == 0 { n_mels } else { feature_dim };
                let scale = 1.5 / (fan_in as f64).sqrt();
                (0..feature_dim * fan_in)
                    .map(|_| {
                        scale
                            * <StandardNormal as Distribution<f64>>::sample(
                                &StandardNormal,
                                &mut rng,
                            )
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            num_layers,
            feature_dim,
            n_mels,
            seed,
            weights,
        })
    }

    pub fn identity(&self) -> String {
        format!(
            "toy-encoder/v1/layers={}/dim={}/mels={}/seed={}",
            self.num_layers, self.feature_dim, self.n_mels, self.seed
        )
    }

    pub fn encode(&self, clip: &AudioClip, clip_id: &str) -> Result<AudioFeatureStack> {
        check_audio(&clip.samples)?;
        let mel = MelSpectrogram::new(clip.sample_rate, N_FFT, HOP, self.n_mels);
        let frames = mel.log_power(&clip.samples);
        let (t, d) = (frames.len(), self.feature_dim);
        let mut values = vec![0f32; self.num_layers * t * d];
        for (ti, frame) in frames.iter().enumerate() {
            let mut h: Vec<f64> = frame.iter().map(|&v| normalise(v)).collect();
            for (l, w) in self.weights.iter().enumerate() {
                let fan_in = h.len();
                let next: Vec<f64> = (0..d)
                    .map(|o| {
                        let row = &w[o * fan_in..(o + 1) * fan_in];
                        row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>().tanh()
                    })
                    .collect();
                let base = (l * t + ti) * d;
                for (slot, v) in values[base..base + d].iter_mut().zip(&next) {
                    *slot = *v as f32;
                }
                h = next;
            }
        }
        AudioFeatureStack::new(clip_id, [self.num_layers, t, d], values)
    }
}

/// Mean normalised log-mel vector over consecutive one-second windows.
#[derive(Debug, Clone)]
pub struct ToyEmbedder {
    pub n_mels: usize,
}

impl Default for ToyEmbedder {
    fn default() -> Self {
        Self { n_mels: 16 }
    }
}

impl AudioEmbedder for ToyEmbedder {
    fn identity(&self) -> String {
        format!("toy-mel-embedder/v1/mels={}", self.n_mels)
    }

    fn embed(&self, samples: &[f32], sample_rate: u32) -> Result<Vec<Vec<f64>>> {
        check_audio(samples)?;
        let mel = MelSpectrogram::new(sample_rate, N_FFT, HOP, self.n_mels);
        let frames = mel.log_power(samples);
        let per_window = (mel.frame_rate().round() as usize).max(1);
        Ok(frames
            .chunks(per_window)
            .map(|chunk| {
                (0..self.n_mels)
                    .map(|m| {
                        chunk.iter().map(|f| normalise(f[m])).sum::<f64>() / chunk.len() as f64
                    })
                    .collect()
            })
            .collect())
    }
}

/// Fraction of total mel energy in each of `num_labels` contiguous bands,
/// floored so that no label has probability zero.
#[derive(Debug, Clone)]
pub struct ToyClassifier {
    pub num_labels: usize,
    pub mels_per_label: usize,
}

impl Default for ToyClassifier {
    fn default() -> Self {
        Self {
            num_labels: 8,
            mels_per_label: 4,
        }
    }
}

const CLASSIFIER_FLOOR: f64 = 1e-6;

impl AudioClassifier for ToyClassifier {
    fn identity(&self) -> String {
        format!(
            "toy-band-classifier/v1/labels={}/mels-per-label={}",
            self.num_labels, self.mels_per_label
        )
    }

    fn num_labels(&self) -> usize {
        self.num_labels
    }

    fn classify(&self, samples: &[f32], sample_rate: u32) -> Result<Vec<f64>> {
        check_audio(samples)?;
        let mel = MelSpectrogram::new(
            sample_rate,
            N_FFT,
            HOP,
            self.num_labels * self.mels_per_label,
        );
        let mut bands = vec![0.0; self.num_labels];
        for frame in mel.power(samples) {
            for (m, p) in frame.iter().enumerate() {
                bands[m / self.mels_per_label] += p;
            }
        }
        let total: f64 = bands.iter().sum();
        let k = self.num_labels as f64;
        Ok(bands
            .iter()
            .map(|b| {
                let frac = if total > 0.0 { b / total } else { 1.0 / k };
                (frac + CLASSIFIER_FLOOR) / (1.0 + k * CLASSIFIER_FLOOR)
            })
            .collect())
    }
}
