//! Reference-based text metrics over whitespace tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::chunker::tokens;

pub const BLEU_MAX_N: usize = 4;

fn ngram_counts<'a, 'b>(toks: &'a [&'b str], n: usize) -> HashMap<&'a [&'b str], usize> {
    let mut counts = HashMap::new();
    for gram in toks.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram matches and total candidate n-grams.
fn modified_precision(cand: &[&str], reference: &[&str], n: usize) -> (usize, usize) {
    if cand.len() < n {
        return (0, 0);
    }
    let ref_counts = ngram_counts(reference, n);
    let matched = ngram_counts(cand, n)
        .into_iter()
        .map(|(gram, c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, cand.len() + 1 - n)
}

/// Sentence BLEU on token slices: uniform-weight geometric mean of clipped
/// n-gram precisions for n in 1..=max_n, times the brevity penalty. Any zero
/// precision gives 0; there is no smoothing.
pub fn bleu_tokens(cand: &[&str], reference: &[&str], max_n: usize) -> f64 {
    if cand.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = modified_precision(cand, reference, n);
        if matched == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let (c, r) = (cand.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (log_sum / max_n as f64).exp()
}

pub fn bleu(candidate: &str, reference: &str) -> f64 {
    bleu_tokens(&tokens(candidate), &tokens(reference), BLEU_MAX_N)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_tokens(cand: &[&str], reference: &[&str]) -> RougeL {
    if cand.is_empty() || reference.is_empty() {
        return RougeL::default();
    }
    let lcs = lcs_len(cand, reference) as f64;
    let precision = lcs / cand.len() as f64;
    let recall = lcs / reference.len() as f64;
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    RougeL {
        precision,
        recall,
        f,
    }
}

pub fn rouge_l(candidate: &str, reference: &str) -> RougeL {
    rouge_l_tokens(&tokens(candidate), &tokens(reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bleu_identity_and_empty() {
        assert_eq!(bleu("a b c d e", "a b c d e"), 1.0);
        assert_eq!(bleu("", "a b c d"), 0.0);
        assert_eq!(bleu("a b c", "a b c"), 0.0, "no 4-grams in a 3-token candidate");
    }

    #[test]
    fn bleu_worked_example() {
        let got = bleu("the cat sat on the mat", "the cat sat on a mat");
        let want = (5.0 / 6.0 * 3.0 / 5.0 * 2.0 / 4.0 * 1.0 / 3.0f64).powf(0.25);
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.5372).abs() < 1e-4);
    }

    #[test]
    fn bleu_zero_fourgram_overlap_is_exactly_zero() {
        assert_eq!(bleu("a b c d x e f g h", "a b c y d e f z g h"), 0.0);
    }

    #[test]
    fn bleu_brevity_penalty() {
        let got = bleu("a b c d", "a b c d e f g h");
        assert!((got - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn rouge_examples() {
        let r = rouge_l("the cat sat", "the cat is on the mat");
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.f - 4.0 / 9.0).abs() < 1e-12);
        assert_eq!(rouge_l("x y", "x y"), RougeL { precision: 1.0, recall: 1.0, f: 1.0 });
        assert_eq!(rouge_l("a b", "c d"), RougeL::default());
        assert_eq!(rouge_l("", "c d"), RougeL::default());
    }

    proptest! {
        #[test]
        fn bleu_invariant_under_relabeling(
            c in prop::collection::vec(0u8..6, 0..20),
            r in prop::collection::vec(0u8..6, 0..20),
            shift in 1u8..6,
        ) {
            let words = ["uno", "due", "tre", "quattro", "cinque", "sei"];
            let render = |v: &[u8], s: u8| v.iter().map(|&i| words[((i + s) % 6) as usize]).collect::<Vec<_>>().join(" ");
            let a = bleu(&render(&c, 0), &render(&r, 0));
            let b = bleu(&render(&c, shift), &render(&r, shift));
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
