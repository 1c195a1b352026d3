use rayon::prelude::*;

use super::bert_score::{bert_score, TokenEmbedder};
use super::bleu::{corpus_bleu, UNIFORM_WEIGHTS};
use super::meteor::meteor;
use super::rouge::rouge_l;
use super::tokenize::tokenize;
use crate::error::{Error, Result};
use crate::report::{self, MetricReport};

/// One row of the caption table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptionScores {
    pub bleu: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    pub bert_score: f64,
}

impl CaptionScores {
    pub fn columns(&self) -> [(&'static str, f64); 4] {
        [
            (report::BLEU, self.bleu),
            (report::METEOR, self.meteor),
            (report::ROUGE_L, self.rouge_l),
            (report::BERT_SCORE, self.bert_score),
        ]
    }
}

/// Scores `(hypothesis, reference)` pairs: corpus BLEU over aggregated
/// counts with uniform weights; METEOR, ROUGE-L and BERT-Score F1 as
/// arithmetic means of the per-pair values.
pub fn corpus_scores(
    pairs: &[(String, String)],
    embedder: &dyn TokenEmbedder,
) -> Result<CaptionScores> {
    if pairs.is_empty() {
        return Err(Error::invalid("cannot score an empty set of caption pairs"));
    }
    let tokenized: Vec<_> = pairs
        .iter()
        .map(|(h, r)| (tokenize(h), tokenize(r)))
        .collect();
    let bleu_pairs: Vec<_> = tokenized
        .iter()
        .map(|(h, r)| (h.clone(), vec![r.clone()]))
        .collect();
    let bleu = corpus_bleu(&bleu_pairs, &UNIFORM_WEIGHTS)?;

    let per_pair: Vec<(f64, f64, f64)> = tokenized
        .par_iter()
        .map(|(h, r)| -> Result<_> {
            Ok((meteor(h, r), rouge_l(h, r), bert_score(h, r, embedder)?.f1))
        })
        .collect::<Result<_>>()?;
    let n = per_pair.len() as f64;
    let (m, rl, bs) = per_pair.iter().fold((0.0, 0.0, 0.0), |acc, v| {
        (acc.0 + v.0, acc.1 + v.1, acc.2 + v.2)
    });
    Ok(CaptionScores {
        bleu,
        meteor: m / n,
        rouge_l: rl / n,
        bert_score: bs / n,
    })
}

/// Single-row report with columns B-U, M-R, R-L, B-S.
pub fn corpus_report(
    row_key: &str,
    pairs: &[(String, String)],
    embedder: &dyn TokenEmbedder,
) -> Result<MetricReport> {
    let scores = corpus_scores(pairs, embedder)?;
    let mut report = MetricReport::new();
    report.insert_row(row_key, scores.columns());
    Ok(report)
}
