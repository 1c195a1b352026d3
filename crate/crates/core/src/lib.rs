//! # musiscene
//!
//! Music scene imagination, end to end at desk scale:
//!
//! - [`corpus`]: build a video/music/fusion/scene caption corpus from clip
//!   manifests with pluggable captioner and LLM backends behind a
//!   content-addressed cache.
//! - [`adapter`]: the music understanding adapter (layer aggregator, dense
//!   projector, gated prefix injection) on top of a frozen causal LM.
//! - [`finetune`]: adapter-only training, greedy/sampled decoding and
//!   checkpoint evaluation.
//! - [`text_metrics`]: BLEU, METEOR, ROUGE-L and BERT-Score.
//! - [`audio_metrics`]: Fréchet audio distance and label KL divergence.
//! - [`vbmg`]: the caption-strategy music generation experiment and survey
//!   aggregation.
//!
//! Every model is a backend. The crate ships deterministic toy stand-ins
//! ([`audio`], [`adapter::ToyCausalLm`], stub captioners) so that the whole
//! pipeline runs offline.

pub mod adapter;
pub mod audio;
pub mod audio_metrics;
pub mod corpus;
pub mod error;
pub mod finetune;
pub mod io;
pub mod report;
pub mod retry;
pub mod text_metrics;
pub mod toy;
pub mod vbmg;

pub use error::{Error, Result};
pub use report::MetricReport;
