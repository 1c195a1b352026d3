//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use candle_core::{Device, Tensor};
use musiscene::adapter::{
    AdapterConfig, AudioFeatureStack, SceneModel, TokenizedSample, ToyCausalLm, ToyLmConfig, Vocab,
    EOS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TEXTS: [&str; 3] = [
    "what scene suits this music ?",
    "a calm evening at the beach .",
    "a tense night in the city .",
];

pub fn small_lm(seed: u64) -> ToyCausalLm {
    let config = ToyLmConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        d_ff: 32,
        max_seq_len: 32,
        seed,
    };
    ToyCausalLm::new(config, Vocab::from_texts(TEXTS)).unwrap()
}

/// 3 layers × 6 dims in, 16 out, two slots; 205 parameters without the
/// prompt, 237 with it.
pub fn small_config(learned_prompt: bool, gate_init: f64) -> AdapterConfig {
    AdapterConfig {
        prefix_len: 2,
        dense_hidden_dims: vec![8],
        gate_init,
        learned_prompt,
        ..AdapterConfig::with_defaults(3, 6, 16)
    }
}

pub fn random_stack(clip_id: &str, shape: [usize; 3], seed: u64) -> AudioFeatureStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    AudioFeatureStack::new(clip_id, shape, values).unwrap()
}

/// Two clips with different answers (ending in `<eos>`) sharing a question.
pub struct Batch {
    pub stacks: Vec<AudioFeatureStack>,
    pub question: Vec<u32>,
    pub answers: Vec<Vec<u32>>,
}

impl Batch {
    pub fn new(vocab: &Vocab, frames: usize) -> Self {
        let mut answers: Vec<Vec<u32>> = TEXTS[1..].iter().map(|t| vocab.encode(t)).collect();
        answers[1].truncate(4);
        for a in &mut answers {
            a.push(EOS);
        }
        Self {
            stacks: vec![
                random_stack("a", [3, frames, 6], 1),
                random_stack("b", [3, frames + 3, 6], 2),
            ],
            question: vocab.encode(TEXTS[0]),
            answers,
        }
    }

    pub fn samples(&self) -> Vec<TokenizedSample<'_>> {
        self.stacks
            .iter()
            .zip(&self.answers)
            .map(|(s, a)| TokenizedSample {
                features: s,
                question: &self.question,
                answer: a,
            })
            .collect()
    }
}

fn loss_value(model: &SceneModel, batch: &Batch) -> f64 {
    model
        .batch_loss(&batch.samples())
        .unwrap()
        .0
        .to_scalar::<f64>()
        .unwrap()
}

/// Relative error `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖)` between the analytic gradient
/// and central differences (step `h`), per parameter group.
pub fn gradient_check(model: &SceneModel, batch: &Batch, h: f64) -> Vec<(String, f64)> {
    let (loss, _) = model.batch_loss(&batch.samples()).unwrap();
    let grads = loss.backward().unwrap();
    model
        .params
        .named()
        .into_iter()
        .map(|(name, var)| {
            let analytic: Vec<f64> = grads
                .get(var.as_tensor())
                .map(|g| g.flatten_all().unwrap().to_vec1().unwrap())
                .unwrap_or_else(|| vec![0.0; var.elem_count()]);
            let base: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
            let dims = var.dims().to_vec();
            let set = |values: &[f64]| {
                var.set(&Tensor::from_vec(values.to_vec(), dims.as_slice(), &Device::Cpu).unwrap())
                    .unwrap()
            };
            let mut numeric = Vec::with_capacity(base.len());
            let mut probe = base.clone();
            for i in 0..base.len() {
                probe[i] = base[i] + h;
                set(&probe);
                let up = loss_value(model, batch);
                probe[i] = base[i] - h;
                set(&probe);
                let down = loss_value(model, batch);
                probe[i] = base[i];
                numeric.push((up - down) / (2.0 * h));
            }
            set(&base);
            let diff = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, n)| (a - n).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = norm(&analytic).max(norm(&numeric)).max(1e-12);
            (name, diff / scale)
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Every backbone weight as raw bits.
pub fn backbone_bits(lm: &ToyCausalLm) -> Vec<(String, Vec<u64>)> {
    lm.named_weights()
        .into_iter()
        .map(|(n, t)| {
            let v: Vec<f64> = t.flatten_all().unwrap().to_vec1().unwrap();
            (n, v.into_iter().map(f64::to_bits).collect())
        })
        .collect()
}

/// Independent corpus BLEU: string-keyed n-gram tables, clipped against the
/// single reference, add-one smoothing for orders above 1 with no matches,
/// uniform weights and the usual brevity penalty.
pub fn reference_corpus_bleu(pairs: &[(Vec<String>, Vec<String>)]) -> f64 {
    use std::collections::BTreeMap;
    let grams = |toks: &[String], n: usize| {
        let mut m: BTreeMap<String, usize> = BTreeMap::new();
        if toks.len() >= n {
            for i in 0..=toks.len() - n {
                *m.entry(toks[i..i + n].join("\u{1f}")).or_default() += 1;
            }
        }
        m
    };
    let (mut c, mut r) = (0usize, 0usize);
    let mut num = [0usize; 4];
    let mut den = [0usize; 4];
    for (hyp, reference) in pairs {
        c += hyp.len();
        r += reference.len();
        for n in 1..=4 {
            let rg = grams(reference, n);
            for (g, k) in grams(hyp, n) {
                num[n - 1] += k.min(*rg.get(&g).unwrap_or(&0));
                den[n - 1] += k;
            }
        }
    }
    if c == 0 {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 0..4 {
        let p = if num[n] == 0 && n > 0 {
            1.0 / (den[n] as f64 + 1.0)
        } else if den[n] == 0 {
            0.0
        } else {
            num[n] as f64 / den[n] as f64
        };
        if p == 0.0 {
            return 0.0;
        }
        log_p += 0.25 * p.ln();
    }
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    bp * log_p.exp()
}

/// Survey rows whose per-strategy means are exactly `targets` (one
/// decimal): `respondents × videos` ratings per strategy, spread in
/// cancelling ± pairs around the target.
pub fn survey_csv(targets: &[(&str, f64)], respondents: usize, videos: usize) -> String {
    let mut out = String::from("respondent_id,video_id,strategy,score\n");
    let count = respondents * videos;
    for (strategy, target) in targets {
        let centre = (target * 10.0).round() as i64;
        let mut k = 0;
        for r in 0..respondents {
            for v in 0..videos {
                let offset = 25 * ((k / 2) % 4 + 1) as i64;
                let offset = match (k % 2, k + 1 == count) {
                    (0, true) => 0,
                    (0, false) => offset,
                    _ => -offset,
                };
                let tenths = centre + offset;
                out.push_str(&format!(
                    "r{r:02},v{v:02},{strategy},{}.{}\n",
                    tenths / 10,
                    tenths % 10
                ));
                k += 1;
            }
        }
    }
    out
}
