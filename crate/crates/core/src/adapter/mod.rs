//! The music understanding adapter.
//!
//! An encoder produces a stack of hidden states `[layers, frames, dim]`. The
//! adapter mixes the layer axis with a learned kernel, pools frames into
//! `prefix_len` slots, and maps each slot through a small dense stack to the
//! language model width. The resulting prefix is attended to by the top
//! `injected_layers` blocks of a frozen causal LM through a separate softmax,
//! scaled by a learned per-layer gate. With every gate at zero the model is
//! exactly the frozen LM.
//!
//! Only [`AdapterParameters`] are trainable. The backbone holds plain tensors
//! and is never handed to an optimizer.

mod features;
mod lm;
mod model;
mod params;

use serde::{Deserialize, Serialize};

pub use features::{AudioFeatureStack, FeatureDescriptor};
pub use lm::{BackboneSpec, PrefixInput, ToyCausalLm, ToyLmConfig, Vocab, BOS, EOS, PAD, UNK};
pub use model::{
    aggregate_layers, pooling_matrix, project_to_prefix, ParameterReport, SceneModel,
    TokenizedSample,
};
pub use params::{AdapterParameters, DenseLayer, NamedArray};

pub(crate) use lm::last_log_probs;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub num_layers_in: usize,
    pub feature_dim: usize,
    pub model_dim: usize,
    pub prefix_len: usize,
    pub dense_hidden_dims: Vec<usize>,
    pub injected_layers: usize,
    pub gate_init: f64,
    /// Adds a learned `[prefix_len, model_dim]` prompt to the projected
    /// audio so that slots can differ even when the audio is stationary.
    #[serde(default)]
    pub learned_prompt: bool,
}

impl AdapterConfig {
    /// One hidden layer of width `feature_dim`, a single prefix slot, the
    /// top two LM layers injected and zero gates.
    pub fn with_defaults(num_layers_in: usize, feature_dim: usize, model_dim: usize) -> Self {
        Self {
            num_layers_in,
            feature_dim,
            model_dim,
            prefix_len: 1,
            dense_hidden_dims: vec![feature_dim],
            injected_layers: 2,
            gate_init: 0.0,
            learned_prompt: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers_in == 0 || self.feature_dim == 0 || self.model_dim == 0 {
            return Err(Error::invalid("adapter dimensions must be positive"));
        }
        if self.prefix_len == 0 {
            return Err(Error::invalid("prefix_len must be at least 1"));
        }
        if self.dense_hidden_dims.contains(&0) {
            return Err(Error::invalid("dense_hidden_dims entries must be positive"));
        }
        if self.injected_layers == 0 {
            return Err(Error::invalid("injected_layers must be at least 1"));
        }
        if !self.gate_init.is_finite() {
            return Err(Error::invalid("gate_init must be finite"));
        }
        Ok(())
    }

    /// Validation plus the constraints the backbone imposes.
    pub fn validate_for(&self, lm: &ToyCausalLm) -> Result<()> {
        self.validate()?;
        if self.injected_layers > lm.num_layers() {
            return Err(Error::invalid(format!(
                "injected_layers {} exceeds LM depth {}",
                self.injected_layers,
                lm.num_layers()
            )));
        }
        if self.model_dim != lm.model_dim() {
            return Err(Error::invalid(format!(
                "model_dim {} does not match LM width {}",
                self.model_dim,
                lm.model_dim()
            )));
        }
        Ok(())
    }

    /// `[feature_dim, hidden…, model_dim]`
    pub fn dense_dims(&self) -> Vec<usize> {
        std::iter::once(self.feature_dim)
            .chain(self.dense_hidden_dims.iter().copied())
            .chain(std::iter::once(self.model_dim))
            .collect()
    }

    /// Kernel + dense weights and biases + gates (+ prompt).
    pub fn trainable_count(&self) -> usize {
        let dense: usize = self
            .dense_dims()
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let prompt = if self.learned_prompt {
            self.prefix_len * self.model_dim
        } else {
            0
        };
        self.num_layers_in + dense + self.injected_layers + prompt
    }
}
