use std::collections::HashMap;

use super::tokenize::TokenSequence;
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// BLEU-4 convention: equal weight on every order.
pub const UNIFORM_WEIGHTS: [f64; MAX_ORDER] = [0.25; MAX_ORDER];

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Hypothesis n-grams clipped by the maximum count in any single reference,
/// and the number of hypothesis n-grams.
fn clipped_counts(hyp: &[String], refs: &[&[String]], n: usize) -> (u64, u64) {
    let hyp_counts = ngram_counts(hyp, n);
    let total: u64 = hyp_counts.values().sum();
    let mut max_ref: HashMap<&[String], u64> = HashMap::new();
    for r in refs {
        for (gram, c) in ngram_counts(r, n) {
            let slot = max_ref.entry(gram).or_insert(0);
            *slot = (*slot).max(c);
        }
    }
    let clipped = hyp_counts
        .iter()
        .map(|(gram, &c)| c.min(max_ref.get(gram).copied().unwrap_or(0)))
        .sum();
    (clipped, total)
}

/// Modified precision with add-one smoothing for higher orders whose raw
/// numerator is zero.
fn smoothed_precision(matches: u64, total: u64, n: usize) -> f64 {
    if matches == 0 && n > 1 {
        1.0 / (total as f64 + 1.0)
    } else if total == 0 {
        0.0
    } else {
        matches as f64 / total as f64
    }
}

/// Reference length closest to `hyp_len`; ties go to the shorter reference.
fn closest_ref_len(hyp_len: usize, refs: &[&[String]]) -> usize {
    refs.iter()
        .map(|r| r.len())
        .min_by_key(|&r| (r.abs_diff(hyp_len), r))
        .unwrap_or(0)
}

fn as_slices(refs: &[TokenSequence]) -> Vec<&[String]> {
    refs.iter().map(|r| r.tokens.as_slice()).collect()
}

/// Sentence-level modified n-gram precision of order `n` (≥ 1).
pub fn bleu_n(hyp: &TokenSequence, refs: &[TokenSequence], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("BLEU order must be at least 1"));
    }
    let (m, t) = clipped_counts(&hyp.tokens, &as_slices(refs), n);
    Ok(smoothed_precision(m, t, n))
}

/// Sufficient statistics for BLEU-1..4; summing them over sentences gives
/// corpus BLEU.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn from_pair(hyp: &[String], refs: &[&[String]]) -> Self {
        let mut stats = Self {
            hyp_len: hyp.len() as u64,
            ref_len: closest_ref_len(hyp.len(), refs) as u64,
            ..Self::default()
        };
        for n in 1..=MAX_ORDER {
            let (m, t) = clipped_counts(hyp, refs, n);
            stats.matches[n - 1] = m;
            stats.totals[n - 1] = t;
        }
        stats
    }

    pub fn accumulate(&mut self, other: &BleuStats) {
        for i in 0..MAX_ORDER {
            self.matches[i] += other.matches[i];
            self.totals[i] += other.totals[i];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn precision(&self, n: usize) -> f64 {
        smoothed_precision(self.matches[n - 1], self.totals[n - 1], n)
    }

    /// `exp(1 - r/c)` when the hypothesis is shorter than the reference.
    pub fn brevity_penalty(&self) -> f64 {
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        if self.hyp_len == 0 {
            0.0
        } else if c < r {
            (1.0 - r / c).exp()
        } else {
            1.0
        }
    }

    pub fn score(&self, weights: &[f64; MAX_ORDER]) -> Result<f64> {
        check_weights(weights)?;
        let mut log_sum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let p = self.precision(i + 1);
            if p == 0.0 {
                return Ok(0.0);
            }
            log_sum += w * p.ln();
        }
        Ok(log_sum.exp() * self.brevity_penalty())
    }
}

fn check_weights(weights: &[f64; MAX_ORDER]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid(format!(
            "BLEU weights must be non-negative, got {weights:?}"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "BLEU weights must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Sentence BLEU: geometric mean of BLEU-1..4 under `weights`, times the
/// brevity penalty.
pub fn bleu_weighted(
    hyp: &TokenSequence,
    refs: &[TokenSequence],
    weights: &[f64; MAX_ORDER],
) -> Result<f64> {
    BleuStats::from_pair(&hyp.tokens, &as_slices(refs)).score(weights)
}

/// Corpus BLEU: n-gram counts and lengths are summed over all pairs before
/// the precisions are formed.
pub fn corpus_bleu(
    pairs: &[(TokenSequence, Vec<TokenSequence>)],
    weights: &[f64; MAX_ORDER],
) -> Result<f64> {
    let mut total = BleuStats::default();
    for (hyp, refs) in pairs {
        total.accumulate(&BleuStats::from_pair(&hyp.tokens, &as_slices(refs)));
    }
    total.score(weights)
}

#[cfg(test)]
mod tests {
    use super::super::tokenize;
    use super::*;

    fn one(s: &str) -> Vec<TokenSequence> {
        vec![tokenize(s)]
    }

    #[test]
    fn unigram_precision_clips_per_reference() {
        let p = bleu_n(
            &tokenize("the cat sat on the mat"),
            &one("the cat is on the mat"),
            1,
        )
        .unwrap();
        assert!((p - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_limits_repeated_words() {
        let p = bleu_n(&tokenize("the the the the"), &one("the cat"), 1).unwrap();
        assert!((p - 0.25).abs() < 1e-12);
    }

    #[test]
    fn identical_pair_scores_one_for_every_order() {
        let s = tokenize("a slow piano piece for a rainy night");
        for n in 1..=4 {
            assert_eq!(bleu_n(&s, std::slice::from_ref(&s), n).unwrap(), 1.0);
        }
        assert!(
            (bleu_weighted(&s, std::slice::from_ref(&s), &UNIFORM_WEIGHTS).unwrap() - 1.0).abs()
                < 1e-12
        );
        // Shorter than the highest order: smoothing keeps identity at 1.
        let short = tokenize("calm piano");
        assert!(
            (bleu_weighted(&short, std::slice::from_ref(&short), &UNIFORM_WEIGHTS).unwrap() - 1.0)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn no_overlap_gives_zero() {
        let refs = one("drums and bass");
        assert_eq!(
            bleu_n(&tokenize("quiet violin solo"), &refs, 1).unwrap(),
            0.0
        );
        assert_eq!(
            bleu_weighted(&tokenize("quiet violin solo"), &refs, &UNIFORM_WEIGHTS).unwrap(),
            0.0
        );
    }

    #[test]
    fn smoothing_applies_only_above_unigrams() {
        // hyp bigrams: "b a", "a b" -> no bigram of the ref "a c".
        let refs = one("a c");
        let hyp = tokenize("b a b");
        assert!((bleu_n(&hyp, &refs, 2).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(bleu_n(&tokenize("x y"), &refs, 1).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_weights_equal_bleu1_times_penalty() {
        let hyp = tokenize("the cat on the mat");
        let refs = one("the cat is on the red mat");
        let b1 = bleu_n(&hyp, &refs, 1).unwrap();
        let bp = (1.0f64 - 7.0 / 5.0).exp();
        let got = bleu_weighted(&hyp, &refs, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((got - b1 * bp).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_uses_closest_reference() {
        let hyp = tokenize("a b c");
        let refs = vec![tokenize("a b c d e f g"), tokenize("a b c d")];
        let stats = BleuStats::from_pair(&hyp.tokens, &as_slices(&refs));
        assert_eq!(stats.ref_len, 4);
        // Ties resolve to the shorter reference.
        let refs = vec![tokenize("a b c d"), tokenize("a b")];
        assert_eq!(
            BleuStats::from_pair(&hyp.tokens, &as_slices(&refs)).ref_len,
            2
        );
    }

    #[test]
    fn rejects_bad_weights() {
        let s = tokenize("x");
        assert!(bleu_weighted(&s, std::slice::from_ref(&s), &[0.5, 0.5, 0.5, 0.0]).is_err());
        assert!(bleu_weighted(&s, std::slice::from_ref(&s), &[1.5, -0.5, 0.0, 0.0]).is_err());
        assert!(bleu_n(&s, std::slice::from_ref(&s), 0).is_err());
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        assert_eq!(
            bleu_weighted(&tokenize(""), &one("some words here"), &UNIFORM_WEIGHTS).unwrap(),
            0.0
        );
    }
}
