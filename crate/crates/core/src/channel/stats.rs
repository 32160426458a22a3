use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::Result;
use crate::metrics::{align_pairs, avg_sentence_tfidf, edit_distance, TfIdfModel};

/// Corpus-level comparison of a clean corpus with its corrupted version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionStats {
    pub clean_vocab_size: usize,
    pub corrupted_vocab_size: usize,
    pub mean_len_clean: f64,
    pub mean_len_corrupted: f64,
    pub unk_token_fraction: f64,
    pub mean_tfidf_clean: f64,
    pub mean_tfidf_corrupted: f64,
    pub corpus_wer: f64,
}

impl CorruptionStats {
    /// Two-column text table.
    pub fn render_table(&self) -> String {
        let rows = [
            (
                "vocabulary size",
                self.clean_vocab_size as f64,
                self.corrupted_vocab_size as f64,
                0,
            ),
            (
                "words per sentence",
                self.mean_len_clean,
                self.mean_len_corrupted,
                2,
            ),
            (
                "mean sentence tf-idf",
                self.mean_tfidf_clean,
                self.mean_tfidf_corrupted,
                3,
            ),
        ];
        let mut out = format!("{:<22} {:>12} {:>12}\n", "statistic", "clean", "corrupted");
        for (name, a, b, prec) in rows {
            out.push_str(&format!("{name:<22} {a:>12.prec$} {b:>12.prec$}\n"));
        }
        out.push_str(&format!(
            "{:<22} {:>12} {:>12.4}\n",
            "<unk> token fraction", "", self.unk_token_fraction
        ));
        out.push_str(&format!(
            "{:<22} {:>12} {:>12.4}\n",
            "corpus WER", "", self.corpus_wer
        ));
        out
    }
}

/// Distinct surfaces, counting `<unk>` if it occurs.
pub(crate) fn vocabulary_size(corpus: &Corpus) -> usize {
    corpus
        .questions()
        .iter()
        .flat_map(|q| q.tokens())
        .map(|t| t.surface.as_str())
        .collect::<BTreeSet<_>>()
        .len()
}

fn mean_sentence_length(corpus: &Corpus) -> f64 {
    let (tokens, sentences) = corpus
        .questions()
        .iter()
        .flat_map(|q| q.sentences.iter())
        .fold((0usize, 0usize), |(t, s), sent| (t + sent.len(), s + 1));
    if sentences == 0 {
        0.0
    } else {
        tokens as f64 / sentences as f64
    }
}

fn mean_tfidf(corpus: &Corpus, tfidf: &TfIdfModel) -> f64 {
    let scores: Vec<f64> = corpus
        .questions()
        .iter()
        .flat_map(|q| q.sentences.iter())
        .map(|s| avg_sentence_tfidf(tfidf, s))
        .collect();
    crate::util::mean(&scores)
}

pub fn channel_stats(
    clean: &Corpus,
    corrupted: &Corpus,
    tfidf: &TfIdfModel,
) -> Result<CorruptionStats> {
    let pairs = align_pairs(clean, corrupted)?;
    let (mut edits, mut ref_len) = (0usize, 0usize);
    for (r, h) in &pairs {
        edits += edit_distance(&r.surfaces(), &h.surfaces());
        ref_len += r.token_count();
    }
    let total_tokens: usize = corrupted.questions().iter().map(|q| q.token_count()).sum();
    let unk_tokens = corrupted
        .questions()
        .iter()
        .flat_map(|q| q.tokens())
        .filter(|t| t.is_unk)
        .count();
    Ok(CorruptionStats {
        clean_vocab_size: vocabulary_size(clean),
        corrupted_vocab_size: vocabulary_size(corrupted),
        mean_len_clean: mean_sentence_length(clean),
        mean_len_corrupted: mean_sentence_length(corrupted),
        unk_token_fraction: if total_tokens == 0 {
            0.0
        } else {
            unk_tokens as f64 / total_tokens as f64
        },
        mean_tfidf_clean: mean_tfidf(clean, tfidf),
        mean_tfidf_corrupted: mean_tfidf(corrupted, tfidf),
        corpus_wer: if ref_len == 0 {
            0.0
        } else {
            edits as f64 / ref_len as f64
        },
    })
}
