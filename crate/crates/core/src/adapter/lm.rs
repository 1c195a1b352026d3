//! Frozen toy backbone: a word-level causal transformer whose weights are a
//! pure function of its config, seed and vocabulary.

use std::collections::{BTreeSet, HashMap};

use candle_core::{DType, Device, Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text_metrics::tokenize;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

const MASKED: f64 = -1e30;
const NORM_EPS: f64 = 1e-6;

/// Word-level vocabulary. Ids 0..4 are `<pad> <bos> <eos> <unk>`; the rest
/// are sorted tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Vocabulary covering every token of `texts` under the metric tokenizer.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(|t| tokenize(t).tokens).collect();
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(
                words
                    .into_iter()
                    .filter(|w| !SPECIALS.contains(&w.as_str())),
            )
            .collect();
        Self::from_tokens(tokens).expect("constructed vocabulary is well formed")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::invalid(
                "vocabulary must start with <pad> <bos> <eos> <unk>",
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Tokenizes `text` and maps tokens to ids, without `<bos>`/`<eos>`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Token strings for `ids`, dropping special tokens.
    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter()
            .filter(|&&id| id as usize >= SPECIALS.len())
            .filter_map(|&id| self.token(id))
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;
    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyLmConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl Default for ToyLmConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            n_layers: 2,
            n_heads: 4,
            d_ff: 64,
            max_seq_len: 128,
            seed: 0,
        }
    }
}

impl ToyLmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0
            || self.n_layers == 0
            || self.n_heads == 0
            || self.d_ff == 0
            || self.max_seq_len == 0
        {
            return Err(Error::invalid("toy LM dimensions must be positive"));
        }
        if self.n_layers > 4 {
            return Err(Error::invalid("toy LM has at most 4 layers"));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::invalid(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

/// Everything needed to rebuild the backbone bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub config: ToyLmConfig,
    pub vocab: Vocab,
}

#[derive(Debug, Clone)]
struct Block {
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
    w1: Tensor,
    w2: Tensor,
}

/// Gated prefix context for the top layers of the backbone.
#[derive(Debug, Clone, Copy)]
pub struct PrefixInput<'a> {
    /// `[batch, prefix_len, d_model]`
    pub prefix: &'a Tensor,
    /// `[injected_layers]`, applied to the top layers in ascending order.
    pub gates: &'a Tensor,
}

/// Pre-norm causal transformer: learned positions, weightless RMS norm,
/// SiLU MLP, untied output head.
#[derive(Debug, Clone)]
pub struct ToyCausalLm {
    spec: BackboneSpec,
    tok_emb: Tensor,
    pos_emb: Tensor,
    blocks: Vec<Block>,
    head: Tensor,
    digest: String,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Result<Tensor> {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect();
    Ok(Tensor::from_vec(data, (rows, cols), &Device::Cpu)?)
}

pub(crate) fn rms_norm(x: &Tensor) -> Result<Tensor> {
    let ms = x.sqr()?.mean_keepdim(D::Minus1)?;
    Ok(x.broadcast_div(&(ms + NORM_EPS)?.sqrt()?)?)
}

pub(crate) fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let m = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&m)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub(crate) fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let m = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&m)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

fn causal_mask(len: usize) -> Result<Tensor> {
    let data: Vec<f64> = (0..len * len)
        .map(|i| if i % len > i / len { MASKED } else { 0.0 })
        .collect();
    Ok(Tensor::from_vec(data, (len, len), &Device::Cpu)?)
}

impl ToyCausalLm {
    pub fn new(config: ToyLmConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let (d, v, ff) = (config.d_model, vocab.len(), config.d_ff);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tok_emb = gaussian(&mut rng, v, d, 1.0)?;
        let pos_emb = gaussian(&mut rng, config.max_seq_len, d, 0.5)?;
        let inv = |n: usize| 1.0 / (n as f64).sqrt();
        let mut blocks = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            blocks.push(Block {
                wq: gaussian(&mut rng, d, d, inv(d))?,
                wk: gaussian(&mut rng, d, d, inv(d))?,
                wv: gaussian(&mut rng, d, d, inv(d))?,
                wo: gaussian(&mut rng, d, d, inv(d))?,
                w1: gaussian(&mut rng, d, ff, inv(d))?,
                w2: gaussian(&mut rng, ff, d, inv(ff))?,
            });
        }
        let head = gaussian(&mut rng, d, v, inv(d))?;
        let mut lm = Self {
            spec: BackboneSpec { config, vocab },
            tok_emb,
            pos_emb,
            blocks,
            head,
            digest: String::new(),
        };
        lm.digest = lm.recompute_digest()?;
        Ok(lm)
    }

    pub fn from_spec(spec: &BackboneSpec) -> Result<Self> {
        Self::new(spec.config.clone(), spec.vocab.clone())
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn config(&self) -> &ToyLmConfig {
        &self.spec.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.spec.vocab
    }

    pub fn num_layers(&self) -> usize {
        self.spec.config.n_layers
    }

    pub fn model_dim(&self) -> usize {
        self.spec.config.d_model
    }

    pub fn vocab_size(&self) -> usize {
        self.spec.vocab.len()
    }

    /// SHA-256 over every weight, in construction order.
    pub fn weight_digest(&self) -> &str {
        &self.digest
    }

    pub fn identity(&self) -> String {
        let c = &self.spec.config;
        format!(
            "toy-causal-lm/v1/d={}/layers={}/heads={}/ff={}/vocab={}/seed={}/{}",
            c.d_model,
            c.n_layers,
            c.n_heads,
            c.d_ff,
            self.vocab_size(),
            c.seed,
            &self.digest[..16]
        )
    }

    /// Named frozen tensors.
    pub fn named_weights(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("lm.tok_emb".to_string(), &self.tok_emb),
            ("lm.pos_emb".to_string(), &self.pos_emb),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (n, t) in [
                ("wq", &b.wq),
                ("wk", &b.wk),
                ("wv", &b.wv),
                ("wo", &b.wo),
                ("w1", &b.w1),
                ("w2", &b.w2),
            ] {
                out.push((format!("lm.blocks.{i}.{n}"), t));
            }
        }
        out.push(("lm.head".to_string(), &self.head));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_weights()
            .iter()
            .map(|(_, t)| t.elem_count())
            .sum()
    }

    pub fn recompute_digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, t) in self.named_weights() {
            h.update(name.as_bytes());
            for v in t.flatten_all()?.to_vec1::<f64>()? {
                h.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Checks every id against the vocabulary.
    pub fn check_tokens(&self, ids: &[u32]) -> Result<()> {
        let vocab_size = self.vocab_size();
        match ids.iter().find(|&&id| id as usize >= vocab_size) {
            Some(&id) => Err(Error::TokenOutOfVocabulary { id, vocab_size }),
            None => Ok(()),
        }
    }

    /// Logits `[batch, seq, vocab]` for right-padded token rows of equal
    /// length. With `prefix`, the top `gates.len()` layers also attend to the
    /// prefix through a separate softmax whose output is scaled by the gate.
    pub fn forward(&self, rows: &[Vec<u32>], prefix: Option<PrefixInput<'_>>) -> Result<Tensor> {
        let batch = rows.len();
        let seq = rows.first().map_or(0, Vec::len);
        if batch == 0 || seq == 0 {
            return Err(Error::invalid(
                "forward needs at least one non-empty token row",
            ));
        }
        if rows.iter().any(|r| r.len() != seq) {
            return Err(Error::Shape("token rows must share one length".into()));
        }
        if seq > self.spec.config.max_seq_len {
            return Err(Error::invalid(format!(
                "sequence length {seq} exceeds max_seq_len {}",
                self.spec.config.max_seq_len
            )));
        }
        let flat: Vec<u32> = rows.iter().flatten().copied().collect();
        self.check_tokens(&flat)?;

        let c = &self.spec.config;
        let (d, h) = (c.d_model, c.n_heads);
        let dh = d / h;
        let scale = 1.0 / (dh as f64).sqrt();
        let n_layers = self.blocks.len();
        let injected = match prefix {
            Some(p) => {
                let k = p.gates.dims1()?;
                let (pb, _, pd) = p.prefix.dims3()?;
                if k == 0 || k > n_layers {
                    return Err(Error::invalid(format!(
                        "cannot inject into {k} of {n_layers} layers"
                    )));
                }
                if pb != batch || pd != d {
                    return Err(Error::Shape(format!(
                        "prefix {:?} does not fit batch {batch} / d_model {d}",
                        p.prefix.dims()
                    )));
                }
                k
            }
            None => 0,
        };

        let ids = Tensor::from_vec(flat, batch * seq, &Device::Cpu)?;
        let mut x = self
            .tok_emb
            .index_select(&ids, 0)?
            .reshape((batch, seq, d))?
            .broadcast_add(&self.pos_emb.narrow(0, 0, seq)?)?;
        let mask = causal_mask(seq)?;
        let heads = |t: Tensor, len: usize| -> Result<Tensor> {
            Ok(t.reshape((batch, len, h, dh))?
                .transpose(1, 2)?
                .contiguous()?)
        };

        for (l, b) in self.blocks.iter().enumerate() {
            let xn = rms_norm(&x)?;
            let q = heads(xn.broadcast_matmul(&b.wq)?, seq)?;
            let k = heads(xn.broadcast_matmul(&b.wk)?, seq)?;
            let v = heads(xn.broadcast_matmul(&b.wv)?, seq)?;
            let scores = (q.matmul(&k.t()?)? * scale)?.broadcast_add(&mask)?;
            let mut attn = softmax_last(&scores)?.matmul(&v)?;
            if let Some(p) = prefix.filter(|_| l + injected >= n_layers) {
                let plen = p.prefix.dim(1)?;
                let kp = heads(p.prefix.broadcast_matmul(&b.wk)?, plen)?;
                let vp = heads(p.prefix.broadcast_matmul(&b.wv)?, plen)?;
                let sp = (q.matmul(&kp.t()?)? * scale)?;
                let gate = p.gates.narrow(0, l + injected - n_layers, 1)?;
                let ap = softmax_last(&sp)?.matmul(&vp)?.broadcast_mul(&gate)?;
                attn = (attn + ap)?;
            }
            let attn = attn.transpose(1, 2)?.reshape((batch, seq, d))?;
            x = (x + attn.broadcast_matmul(&b.wo)?)?;
            let hn = rms_norm(&x)?;
            let mlp = hn
                .broadcast_matmul(&b.w1)?
                .silu()?
                .broadcast_matmul(&b.w2)?;
            x = (x + mlp)?;
        }
        Ok(rms_norm(&x)?.broadcast_matmul(&self.head)?)
    }

    /// Mean next-token cross-entropy over positions with nonzero `weights`.
    /// `weights[b][t]` marks whether the token at `t + 1` of row `b` counts.
    pub fn masked_loss(
        logits: &Tensor,
        rows: &[Vec<u32>],
        weights: &[Vec<bool>],
    ) -> Result<(Tensor, usize)> {
        let (batch, seq, vocab) = logits.dims3()?;
        let mut target = vec![0f64; batch * seq * vocab];
        let mut count = 0usize;
        for (b, (row, w)) in rows.iter().zip(weights).enumerate() {
            for t in 0..seq.saturating_sub(1) {
                if w[t] {
                    target[(b * seq + t) * vocab + row[t + 1] as usize] = 1.0;
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::invalid("no target positions in batch"));
        }
        let target = Tensor::from_vec(target, (batch, seq, vocab), &Device::Cpu)?;
        let nll = (log_softmax_last(logits)? * target)?.sum_all()?.neg()?;
        Ok(((nll / count as f64)?, count))
    }
}

/// Log-probabilities of the next token after the last position of `logits`
/// (`[1, seq, vocab]`).
pub(crate) fn last_log_probs(logits: &Tensor) -> Result<Vec<f64>> {
    let (_, seq, _) = logits.dims3()?;
    let last = logits.narrow(1, seq - 1, 1)?.flatten_all()?;
    Ok(log_softmax_last(&last)?
        .to_dtype(DType::F64)?
        .to_vec1::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm() -> ToyCausalLm {
        let vocab = Vocab::from_texts(["the music suits a calm night .", "what scene ?"]);
        ToyCausalLm::new(ToyLmConfig::default(), vocab).unwrap()
    }

    #[test]
    fn vocab_specials_and_round_trip() {
        let v = Vocab::from_texts(["b a", "a c."]);
        assert_eq!(
            v.tokens(),
            ["<pad>", "<bos>", "<eos>", "<unk>", ".", "a", "b", "c"]
        );
        assert_eq!(v.encode("A zebra"), [5, UNK]);
        assert_eq!(v.decode(&[BOS, 6, 4, EOS]), ["b", "."]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
        assert!(serde_json::from_str::<Vocab>("[\"a\"]").is_err());
    }

    #[test]
    fn weights_are_a_function_of_spec() {
        let a = lm();
        let b = ToyCausalLm::from_spec(a.spec()).unwrap();
        assert_eq!(a.weight_digest(), b.weight_digest());
        let mut spec = a.spec().clone();
        spec.config.seed = 1;
        assert_ne!(
            ToyCausalLm::from_spec(&spec).unwrap().weight_digest(),
            a.weight_digest()
        );
    }

    #[test]
    fn forward_is_causal() {
        let m = lm();
        let a = m.forward(&[vec![1, 4, 5, 6]], None).unwrap();
        let b = m.forward(&[vec![1, 4, 5, 7]], None).unwrap();
        let head = |t: &Tensor| {
            t.narrow(1, 0, 3)
                .unwrap()
                .flatten_all()
                .unwrap()
                .to_vec1::<f64>()
                .unwrap()
        };
        assert_eq!(head(&a), head(&b));
    }

    #[test]
    fn out_of_vocabulary_id_is_rejected() {
        let m = lm();
        let bad = m.vocab_size() as u32;
        assert!(matches!(
            m.forward(&[vec![1, bad]], None),
            Err(Error::TokenOutOfVocabulary { .. })
        ));
    }

    #[test]
    fn log_softmax_normalises() {
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0], [1000.0, 0.0, -1000.0]], &Device::Cpu).unwrap();
        let lp = log_softmax_last(&x).unwrap().to_vec2::<f64>().unwrap();
        for row in lp {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
