use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sentence};
use crate::error::{Error, Result};

/// Document frequencies fitted on a background corpus; one document per
/// question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    df: BTreeMap<String, u64>,
    n_docs: u64,
    fingerprint: String,
}

impl TfIdfModel {
    pub fn document_frequency(&self, term: &str) -> u64 {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// ln((1 + N) / (0.5 + df)); unseen terms get df = 0.
    pub fn idf(&self, term: &str) -> f64 {
        ((1.0 + self.n_docs as f64) / (0.5 + self.document_frequency(term) as f64)).ln()
    }
}

pub fn fit_tfidf(corpus: &Corpus) -> Result<TfIdfModel> {
    if corpus.is_empty() {
        return Err(Error::Empty("tf-idf background corpus"));
    }
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    for q in corpus.questions() {
        let terms: BTreeSet<&str> = q
            .tokens()
            .filter(|t| !t.is_unk)
            .map(|t| t.surface.as_str())
            .collect();
        for term in terms {
            *df.entry(term.to_string()).or_default() += 1;
        }
    }
    let n_docs = corpus.len() as u64;
    let mut canon = format!("{n_docs}\n");
    for (t, f) in &df {
        canon.push_str(&format!("{t}\t{f}\n"));
    }
    Ok(TfIdfModel {
        df,
        n_docs,
        fingerprint: crate::util::fingerprint(canon.as_bytes()),
    })
}

/// Mean over tokens of tf(term, sentence) · idf(term); `<unk>` contributes 0.
pub fn avg_sentence_tfidf(model: &TfIdfModel, sentence: &Sentence) -> f64 {
    if sentence.is_empty() {
        return 0.0;
    }
    let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
    for t in sentence.tokens.iter().filter(|t| !t.is_unk) {
        *tf.entry(t.surface.as_str()).or_default() += 1;
    }
    let total: f64 = sentence
        .tokens
        .iter()
        .filter(|t| !t.is_unk)
        .map(|t| tf[t.surface.as_str()] as f64 * model.idf(&t.surface))
        .sum();
    total / sentence.len() as f64
}
