use std::collections::HashMap;

use super::tokenize::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
        }
    }
}

/// Exact-match unigram alignment between hypothesis and reference positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// `(hyp_index, ref_index)` pairs sorted by hypothesis index.
    pub pairs: Vec<(usize, usize)>,
    pub chunks: usize,
}

impl Alignment {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }
}

/// Number of maximal runs that are contiguous in both sequences.
fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// Repeatedly aligns the longest common run of still-unaligned positions.
/// Always reaches the maximum match count; usually close to minimal chunks.
fn greedy_alignment(hyp: &[u32], reference: &[u32]) -> Vec<(usize, usize)> {
    let mut hyp_used = vec![false; hyp.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for i in 0..hyp.len() {
            for j in 0..reference.len() {
                let mut k = 0;
                while i + k < hyp.len()
                    && j + k < reference.len()
                    && !hyp_used[i + k]
                    && !ref_used[j + k]
                    && hyp[i + k] == reference[j + k]
                {
                    k += 1;
                }
                if k > 0 && best.is_none_or(|(len, _, _)| k > len) {
                    best = Some((k, i, j));
                }
            }
        }
        let Some((len, i, j)) = best else { break };
        for k in 0..len {
            hyp_used[i + k] = true;
            ref_used[j + k] = true;
            pairs.push((i + k, j + k));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Depth-first branch and bound over maximum-cardinality alignments,
/// minimising chunks. Seeded with the greedy alignment; if the node budget
/// runs out the best alignment found so far is returned.
struct ChunkSearch<'a> {
    hyp: &'a [u32],
    candidates: Vec<Vec<usize>>,
    ref_used: Vec<bool>,
    hyp_remaining: Vec<usize>,
    ref_unused: Vec<usize>,
    target_matches: usize,
    current: Vec<(usize, usize)>,
    best: Vec<(usize, usize)>,
    best_chunks: usize,
    nodes: usize,
}

const NODE_BUDGET: usize = 2_000_000;

impl ChunkSearch<'_> {
    fn potential(&self) -> usize {
        self.hyp_remaining
            .iter()
            .zip(&self.ref_unused)
            .map(|(&h, &r)| h.min(r))
            .sum()
    }

    fn search(&mut self, i: usize, prev_j: Option<usize>, chunks: usize) {
        if chunks >= self.best_chunks || self.nodes >= NODE_BUDGET {
            return;
        }
        self.nodes += 1;
        if i == self.hyp.len() {
            if self.current.len() == self.target_matches {
                self.best_chunks = chunks;
                self.best = self.current.clone();
            }
            return;
        }
        let w = self.hyp[i] as usize;
        self.hyp_remaining[w] -= 1;

        // Continuing the current chunk first finds good incumbents early.
        let mut order: Vec<usize> = Vec::with_capacity(self.candidates[i].len());
        if let Some(pj) = prev_j {
            if self.candidates[i].contains(&(pj + 1)) {
                order.push(pj + 1);
            }
        }
        order.extend(
            self.candidates[i]
                .iter()
                .copied()
                .filter(|&j| Some(j) != prev_j.map(|p| p + 1)),
        );

        for j in order {
            if self.ref_used[j] {
                continue;
            }
            let extends = prev_j == Some(j.wrapping_sub(1)) && j > 0;
            self.ref_used[j] = true;
            self.ref_unused[w] -= 1;
            self.current.push((i, j));
            self.search(i + 1, Some(j), chunks + usize::from(!extends));
            self.current.pop();
            self.ref_unused[w] += 1;
            self.ref_used[j] = false;
        }

        let needed = self.target_matches - self.current.len();
        if self.potential() >= needed {
            self.search(i + 1, None, chunks);
        }
        self.hyp_remaining[w] += 1;
    }
}

/// Maximum-match alignment with the fewest chunks.
pub fn meteor_alignment(hyp: &[String], reference: &[String]) -> Alignment {
    fn intern<'a>(t: &'a str, vocab: &mut HashMap<&'a str, u32>) -> u32 {
        let next = vocab.len() as u32;
        *vocab.entry(t).or_insert(next)
    }
    let mut vocab: HashMap<&str, u32> = HashMap::new();
    let h: Vec<u32> = hyp.iter().map(|t| intern(t, &mut vocab)).collect();
    let r: Vec<u32> = reference.iter().map(|t| intern(t, &mut vocab)).collect();
    let n_words = vocab.len();

    let greedy = greedy_alignment(&h, &r);
    let greedy_chunks = count_chunks(&greedy);
    if greedy_chunks <= 1 {
        return Alignment {
            pairs: greedy,
            chunks: greedy_chunks,
        };
    }

    let mut hyp_remaining = vec![0usize; n_words];
    let mut ref_unused = vec![0usize; n_words];
    for &w in &h {
        hyp_remaining[w as usize] += 1;
    }
    for &w in &r {
        ref_unused[w as usize] += 1;
    }
    let candidates = h
        .iter()
        .map(|&w| (0..r.len()).filter(|&j| r[j] == w).collect())
        .collect();
    let mut search = ChunkSearch {
        hyp: &h,
        candidates,
        ref_used: vec![false; r.len()],
        hyp_remaining,
        ref_unused,
        target_matches: greedy.len(),
        current: Vec::new(),
        best: greedy,
        best_chunks: greedy_chunks,
        nodes: 0,
    };
    search.search(0, None, 0);
    Alignment {
        chunks: search.best_chunks,
        pairs: search.best,
    }
}

/// METEOR with exact matching only and the default parameters
/// (α = 0.9, β = 3, γ = 0.5).
pub fn meteor(hyp: &TokenSequence, reference: &TokenSequence) -> f64 {
    meteor_with(hyp, reference, &MeteorParams::default())
}

pub fn meteor_with(hyp: &TokenSequence, reference: &TokenSequence, params: &MeteorParams) -> f64 {
    let alignment = meteor_alignment(&hyp.tokens, &reference.tokens);
    let m = alignment.matches();
    if m == 0 {
        return 0.0;
    }
    let precision = m as f64 / hyp.len() as f64;
    let recall = m as f64 / reference.len() as f64;
    let f_mean = precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
    let penalty = params.gamma * (alignment.chunks as f64 / m as f64).powf(params.beta);
    f_mean * (1.0 - penalty)
}

#[cfg(test)]
mod tests {
    use super::super::tokenize;
    use super::*;

    /// Enumerates every maximum-cardinality alignment; returns the minimum
    /// chunk count.
    fn brute_force_min_chunks(h: &[String], r: &[String]) -> (usize, usize) {
        fn rec(
            i: usize,
            h: &[String],
            r: &[String],
            used: &mut Vec<bool>,
            cur: &mut Vec<(usize, usize)>,
            out: &mut (usize, usize),
        ) {
            if i == h.len() {
                let m = cur.len();
                let c = count_chunks(cur);
                if m > out.0 || (m == out.0 && c < out.1) {
                    *out = (m, c);
                }
                return;
            }
            rec(i + 1, h, r, used, cur, out);
            for j in 0..r.len() {
                if !used[j] && r[j] == h[i] {
                    used[j] = true;
                    cur.push((i, j));
                    rec(i + 1, h, r, used, cur, out);
                    cur.pop();
                    used[j] = false;
                }
            }
        }
        let mut out = (0, usize::MAX);
        rec(
            0,
            h,
            r,
            &mut vec![false; r.len()],
            &mut Vec::new(),
            &mut out,
        );
        if out.0 == 0 {
            out.1 = 0;
        }
        out
    }

    #[test]
    fn identical_sequences_are_one_chunk() {
        let s = tokenize("a calm piano melody at dusk");
        let a = meteor_alignment(&s.tokens, &s.tokens);
        assert_eq!((a.matches(), a.chunks), (6, 1));
        let expected = 1.0 - 0.5 * (1.0f64 / 6.0).powi(3);
        assert!((meteor(&s, &s) - expected).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_pair() {
        // m = 2, chunks = 1, P = R = 2/3.
        let got = meteor(&tokenize("the cat sat"), &tokenize("the cat ran"));
        let p = 2.0 / 3.0;
        let f = p * p / (0.9 * p + 0.1 * p);
        let expected = f * (1.0 - 0.5 * 0.5f64.powi(3));
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.625).abs() < 1e-12);
    }

    #[test]
    fn zero_overlap_scores_zero() {
        assert_eq!(meteor(&tokenize("loud drums"), &tokenize("soft harp")), 0.0);
        assert_eq!(meteor(&tokenize(""), &tokenize("soft harp")), 0.0);
    }

    #[test]
    fn reordering_increases_chunks() {
        let a = meteor_alignment(&tokenize("c d a b").tokens, &tokenize("a b c d").tokens);
        assert_eq!((a.matches(), a.chunks), (4, 2));
    }

    #[test]
    fn search_beats_greedy_when_greedy_is_suboptimal() {
        // Greedy grabs the run "a b c"; optimum chains "x a b" + "c y".
        let h = tokenize("x a b c y").tokens;
        let r = tokenize("a b c x a b c y").tokens;
        let (m, c) = brute_force_min_chunks(&h, &r);
        let a = meteor_alignment(&h, &r);
        assert_eq!((a.matches(), a.chunks), (m, c));
    }

    #[test]
    fn matches_brute_force_on_small_random_sequences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let words = ["a", "b", "c"];
        for _ in 0..300 {
            let lh = rng.random_range(0..7);
            let lr = rng.random_range(0..7);
            let h: Vec<String> = (0..lh)
                .map(|_| words[rng.random_range(0..3)].to_string())
                .collect();
            let r: Vec<String> = (0..lr)
                .map(|_| words[rng.random_range(0..3)].to_string())
                .collect();
            let a = meteor_alignment(&h, &r);
            assert_eq!(
                (a.matches(), a.chunks),
                brute_force_min_chunks(&h, &r),
                "{h:?} vs {r:?}"
            );
        }
    }
}
