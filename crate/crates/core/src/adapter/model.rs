use candle_core::{Device, Tensor};
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::lm::{PrefixInput, ToyCausalLm, BOS, PAD};
use super::{AdapterConfig, AdapterParameters, AudioFeatureStack};
use crate::error::{Error, Result};

/// Collapses the layer axis: `out[t, d] = Σₗ kernel[l] · stack[l, t, d]`.
pub fn aggregate_layers(stack: &AudioFeatureStack, kernel: &Tensor) -> Result<Tensor> {
    let [l, t, d] = stack.shape();
    let k = kernel.dims1()?;
    if k != l {
        return Err(Error::Shape(format!(
            "feature stack for {:?} has {l} layers, adapter expects {k}",
            stack.clip_id
        )));
    }
    let flat = stack.to_tensor()?.reshape((l, t * d))?;
    Ok(kernel.reshape((1, l))?.matmul(&flat)?.reshape((t, d))?)
}

/// `[prefix_len, num_frames]` averaging matrix. Slot `j` covers frames
/// `floor(j·T/P) .. ceil((j+1)·T/P)`, so windows are contiguous, cover every
/// frame and are never empty.
pub fn pooling_matrix(num_frames: usize, prefix_len: usize) -> Result<Tensor> {
    if num_frames == 0 || prefix_len == 0 {
        return Err(Error::invalid(
            "pooling needs at least one frame and one slot",
        ));
    }
    let (t, p) = (num_frames, prefix_len);
    let mut a = vec![0f64; p * t];
    for j in 0..p {
        let start = j * t / p;
        let end = ((j + 1) * t).div_ceil(p);
        let w = 1.0 / (end - start) as f64;
        for f in start..end {
            a[j * t + f] = w;
        }
    }
    Ok(Tensor::from_vec(a, (p, t), &Device::Cpu)?)
}

/// Pools `[num_frames, feature_dim]` into prefix slots and applies the dense
/// stack with SiLU between layers, then adds the learned prompt if there is
/// one. Returns `[prefix_len, model_dim]`.
pub fn project_to_prefix(
    frames: &Tensor,
    params: &AdapterParameters,
    config: &AdapterConfig,
) -> Result<Tensor> {
    let (t, d) = frames.dims2()?;
    if t == 0 {
        return Err(Error::invalid("cannot project zero frames"));
    }
    if d != config.feature_dim {
        return Err(Error::Shape(format!(
            "frames have dim {d}, adapter expects {}",
            config.feature_dim
        )));
    }
    let mut h = pooling_matrix(t, config.prefix_len)?.matmul(frames)?;
    let last = params.dense.len() - 1;
    for (i, layer) in params.dense.iter().enumerate() {
        h = h
            .matmul(layer.weight.as_tensor())?
            .broadcast_add(layer.bias.as_tensor())?;
        if i < last {
            h = h.silu()?;
        }
    }
    if let Some(prompt) = &params.prompt {
        h = (h + prompt.as_tensor())?;
    }
    Ok(h)
}

/// Token ids for one training or evaluation example. `answer` should end
/// with `<eos>` when the model is meant to learn to stop.
#[derive(Debug, Clone, Copy)]
pub struct TokenizedSample<'a> {
    pub features: &'a AudioFeatureStack,
    pub question: &'a [u32],
    pub answer: &'a [u32],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterReport {
    pub trainable_count: usize,
    pub frozen_count: usize,
    pub trainable: Vec<(String, usize)>,
    pub frozen: Vec<(String, usize)>,
}

/// Adapter plus frozen backbone.
#[derive(Debug, Clone)]
pub struct SceneModel {
    pub config: AdapterConfig,
    pub params: AdapterParameters,
    lm: ToyCausalLm,
}

/// `[<bos>] + question + answer`, with loss flags on the positions that
/// predict answer tokens.
fn build_row(question: &[u32], answer: &[u32]) -> (Vec<u32>, Vec<bool>) {
    let mut row = Vec::with_capacity(1 + question.len() + answer.len());
    row.push(BOS);
    row.extend_from_slice(question);
    row.extend_from_slice(answer);
    let weights = (0..row.len())
        .map(|t| t >= question.len() && t + 1 < row.len())
        .collect();
    (row, weights)
}

fn pad_rows(rows: &mut [Vec<u32>], weights: &mut [Vec<bool>]) {
    let len = rows.iter().map(Vec::len).max().unwrap_or(0);
    for (r, w) in rows.iter_mut().zip(weights.iter_mut()) {
        r.resize(len, PAD);
        w.resize(len, false);
    }
}

impl SceneModel {
    pub fn new(config: AdapterConfig, lm: ToyCausalLm, seed: u64) -> Result<Self> {
        config.validate_for(&lm)?;
        let params = AdapterParameters::init(&config, seed)?;
        Ok(Self { config, params, lm })
    }

    pub fn from_parts(
        config: AdapterConfig,
        params: AdapterParameters,
        lm: ToyCausalLm,
    ) -> Result<Self> {
        config.validate_for(&lm)?;
        if params.count() != config.trainable_count() {
            return Err(Error::invalid("adapter parameters do not match config"));
        }
        Ok(Self { config, params, lm })
    }

    pub fn lm(&self) -> &ToyCausalLm {
        &self.lm
    }

    /// Backbone identity plus a digest of the adapter parameters.
    pub fn identity(&self) -> Result<String> {
        let mut h = Sha256::new();
        for a in self.params.to_arrays()? {
            h.update(a.name.as_bytes());
            for v in a.values {
                h.update(v.to_le_bytes());
            }
        }
        Ok(format!(
            "musiscene-adapter/{}/{}",
            &hex::encode(h.finalize())[..16],
            self.lm.identity()
        ))
    }

    /// `[prefix_len, model_dim]` prefix for one clip.
    pub fn prefix(&self, features: &AudioFeatureStack) -> Result<Tensor> {
        let frames = aggregate_layers(features, self.params.conv_kernel.as_tensor())?;
        project_to_prefix(&frames, &self.params, &self.config)
    }

    /// Logits for `[<bos>] + question + answer` with `prefix` injected, and
    /// the mean cross-entropy over the answer tokens only.
    pub fn inject_and_forward(
        &self,
        prefix: &Tensor,
        question: &[u32],
        answer: &[u32],
    ) -> Result<(Tensor, Tensor)> {
        if answer.is_empty() {
            return Err(Error::invalid("answer must contain at least one token"));
        }
        let (row, weights) = build_row(question, answer);
        let prefix = prefix.unsqueeze(0)?;
        let logits = self.lm.forward(
            std::slice::from_ref(&row),
            Some(PrefixInput {
                prefix: &prefix,
                gates: self.params.gates.as_tensor(),
            }),
        )?;
        let (loss, _) = ToyCausalLm::masked_loss(&logits, &[row], &[weights])?;
        Ok((logits, loss))
    }

    /// The frozen LM's answer loss with no audio at all.
    pub fn frozen_loss(&self, question: &[u32], answer: &[u32]) -> Result<Tensor> {
        if answer.is_empty() {
            return Err(Error::invalid("answer must contain at least one token"));
        }
        let (row, weights) = build_row(question, answer);
        let logits = self.lm.forward(std::slice::from_ref(&row), None)?;
        Ok(ToyCausalLm::masked_loss(&logits, &[row], &[weights])?.0)
    }

    /// Token-weighted mean answer loss over a padded batch, and the number
    /// of answer tokens it averages.
    pub fn batch_loss(&self, batch: &[TokenizedSample<'_>]) -> Result<(Tensor, usize)> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut rows = Vec::with_capacity(batch.len());
        let mut weights = Vec::with_capacity(batch.len());
        let mut prefixes = Vec::with_capacity(batch.len());
        for s in batch {
            if s.answer.is_empty() {
                return Err(Error::invalid(format!(
                    "empty answer for clip {:?}",
                    s.features.clip_id
                )));
            }
            let (r, w) = build_row(s.question, s.answer);
            rows.push(r);
            weights.push(w);
            prefixes.push(self.prefix(s.features)?);
        }
        pad_rows(&mut rows, &mut weights);
        let prefix = Tensor::stack(&prefixes, 0)?;
        let logits = self.lm.forward(
            &rows,
            Some(PrefixInput {
                prefix: &prefix,
                gates: self.params.gates.as_tensor(),
            }),
        )?;
        ToyCausalLm::masked_loss(&logits, &rows, &weights)
    }

    /// Log-probabilities of the token following `[<bos>] + tokens`.
    pub fn next_token_log_probs(&self, prefix: &Tensor, tokens: &[u32]) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(tokens.len() + 1);
        row.push(BOS);
        row.extend_from_slice(tokens);
        let prefix = prefix.unsqueeze(0)?;
        let logits = self.lm.forward(
            &[row],
            Some(PrefixInput {
                prefix: &prefix,
                gates: self.params.gates.as_tensor(),
            }),
        )?;
        super::last_log_probs(&logits)
    }

    pub fn trainable_parameter_report(&self) -> ParameterReport {
        let trainable: Vec<(String, usize)> = self
            .params
            .named()
            .into_iter()
            .map(|(n, v)| (n, v.elem_count()))
            .collect();
        let frozen: Vec<(String, usize)> = self
            .lm
            .named_weights()
            .into_iter()
            .map(|(n, t)| (n, t.elem_count()))
            .collect();
        ParameterReport {
            trainable_count: trainable.iter().map(|(_, c)| c).sum(),
            frozen_count: frozen.iter().map(|(_, c)| c).sum(),
            trainable,
            frozen,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{ToyLmConfig, Vocab};

    fn stack(l: usize, t: usize, d: usize, seed: u32) -> AudioFeatureStack {
        let values = (0..l * t * d)
            .map(|i| (((i as u32).wrapping_mul(2_654_435_761) ^ seed) % 1000) as f32 / 500.0 - 1.0)
            .collect();
        AudioFeatureStack::new("c", [l, t, d], values).unwrap()
    }

    #[test]
    fn aggregate_shape_and_uniform_mean() {
        let s = stack(4, 10, 8, 1);
        let k = Tensor::new(&[0.25f64; 4], &Device::Cpu).unwrap();
        let out = aggregate_layers(&s, &k).unwrap();
        assert_eq!(out.dims(), [10, 8]);
        let v = out.to_vec2::<f64>().unwrap();
        for (t, row) in v.iter().enumerate() {
            for (d, &got) in row.iter().enumerate() {
                let mean = (0..4).map(|l| s.get(l, t, d) as f64).sum::<f64>() / 4.0;
                assert!((got - mean).abs() < 1e-6);
            }
        }
        let bad = Tensor::new(&[1.0f64; 3], &Device::Cpu).unwrap();
        assert!(aggregate_layers(&s, &bad).is_err());
    }

    #[test]
    fn pooling_windows() {
        let a = pooling_matrix(10, 1).unwrap().to_vec2::<f64>().unwrap();
        assert!(a[0].iter().all(|&w| (w - 0.1).abs() < 1e-15));
        let a = pooling_matrix(5, 2).unwrap().to_vec2::<f64>().unwrap();
        assert_eq!(a[0], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0]);
        assert_eq!(a[1], [0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        let a = pooling_matrix(2, 3).unwrap().to_vec2::<f64>().unwrap();
        assert_eq!(a, [vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]);
    }

    #[test]
    fn identity_projection_returns_frames() {
        let config = AdapterConfig {
            prefix_len: 6,
            dense_hidden_dims: vec![],
            ..AdapterConfig::with_defaults(1, 4, 4)
        };
        let params = AdapterParameters::init(&config, 0).unwrap();
        params.dense[0]
            .weight
            .set(&Tensor::eye(4, candle_core::DType::F64, &Device::Cpu).unwrap())
            .unwrap();
        let frames = stack(1, 6, 4, 9).to_tensor().unwrap().squeeze(0).unwrap();
        let out = project_to_prefix(&frames, &params, &config).unwrap();
        assert_eq!(
            out.to_vec2::<f64>().unwrap(),
            frames.to_vec2::<f64>().unwrap()
        );
    }

    #[test]
    fn padding_does_not_change_per_sample_loss() {
        let vocab = Vocab::from_texts(["a b c d e f g"]);
        let lm = ToyCausalLm::new(ToyLmConfig::default(), vocab).unwrap();
        let config = AdapterConfig {
            gate_init: 0.7,
            prefix_len: 2,
            ..AdapterConfig::with_defaults(2, 3, 32)
        };
        let model = SceneModel::new(config, lm, 3).unwrap();
        let (f1, f2) = (stack(2, 5, 3, 1), stack(2, 7, 3, 2));
        let (q, a1, a2) = ([4u32, 5], [6u32, 7, 8], [9u32]);
        let s1 = TokenizedSample {
            features: &f1,
            question: &q,
            answer: &a1,
        };
        let s2 = TokenizedSample {
            features: &f2,
            question: &q,
            answer: &a2,
        };
        let (batch, n) = model.batch_loss(&[s1, s2]).unwrap();
        assert_eq!(n, 4);
        let l1 = model
            .inject_and_forward(&model.prefix(&f1).unwrap(), &q, &a1)
            .unwrap()
            .1;
        let l2 = model
            .inject_and_forward(&model.prefix(&f2).unwrap(), &q, &a2)
            .unwrap()
            .1;
        let expected =
            (3.0 * l1.to_scalar::<f64>().unwrap() + l2.to_scalar::<f64>().unwrap()) / 4.0;
        assert!((batch.to_scalar::<f64>().unwrap() - expected).abs() < 1e-12);
    }
}
