//! Caption quality metrics: BLEU, METEOR, ROUGE-L and BERT-Score.
//!
//! All metrics share [`tokenize`] and are pure functions of their inputs.

mod bert_score;
mod bleu;
mod corpus;
mod meteor;
mod rouge;
mod tokenize;

pub use bert_score::{
    bert_score, bert_score_from_similarity, BertScore, HashEmbedder, HttpEmbedder, TokenEmbedder,
};
pub use bleu::{bleu_n, bleu_weighted, corpus_bleu, BleuStats, UNIFORM_WEIGHTS};
pub use corpus::{corpus_report, corpus_scores, CaptionScores};
pub use meteor::{meteor, meteor_alignment, meteor_with, Alignment, MeteorParams};
pub use rouge::{lcs_len, rouge_l};
pub use tokenize::{detokenize, tokenize, TokenSequence};
