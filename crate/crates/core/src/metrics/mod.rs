//! Transcript-quality metrics and corpus statistics.

mod distribution;
mod tfidf;

use crate::error::{Error, Result};

pub use distribution::{
    align_pairs, score_distribution, DistributionReport, GroupKey, Metric, ScoreDistribution,
};
pub use tfidf::{avg_sentence_tfidf, fit_tfidf, TfIdfModel};

/// Minimum number of unit-cost substitutions, insertions and deletions
/// turning `reference` into `hypothesis`.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut curr = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        curr[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[hypothesis.len()]
}

/// Word error rate: edit distance over reference length. May exceed 1.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Empty("WER reference"));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// Sentence-level BLEU with add-one smoothing on the n ≥ 2 precisions.
pub fn bleu<T: PartialEq>(reference: &[T], hypothesis: &[T], max_n: usize) -> Result<f64> {
    if reference.is_empty() || hypothesis.is_empty() {
        return Err(Error::Empty("BLEU input"));
    }
    if max_n == 0 {
        return Err(Error::InvalidArgument("BLEU order must be positive".into()));
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matches, total) = clipped_ngram_matches(reference, hypothesis, n);
        let precision = if n == 1 {
            if matches == 0 {
                return Ok(0.0);
            }
            matches as f64 / total as f64
        } else {
            (matches as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += precision.ln();
    }
    let (r, c) = (reference.len() as f64, hypothesis.len() as f64);
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok((brevity * (log_sum / max_n as f64).exp()).clamp(0.0, 1.0))
}

/// (clipped matches, hypothesis n-gram count) for order `n`.
fn clipped_ngram_matches<T: PartialEq>(
    reference: &[T],
    hypothesis: &[T],
    n: usize,
) -> (usize, usize) {
    if hypothesis.len() < n {
        return (0, 0);
    }
    let ref_grams: Vec<&[T]> = if reference.len() >= n {
        reference.windows(n).collect()
    } else {
        Vec::new()
    };
    let mut used = vec![false; ref_grams.len()];
    let mut matches = 0;
    let hyp_grams: Vec<&[T]> = hypothesis.windows(n).collect();
    for g in &hyp_grams {
        if let Some(k) = (0..ref_grams.len()).find(|&k| !used[k] && ref_grams[k] == *g) {
            used[k] = true;
            matches += 1;
        }
    }
    (matches, hyp_grams.len())
}
