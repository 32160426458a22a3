//! Answer retrieval baseline: one BM25-scored document per answer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Question};
use crate::error::{Error, Result};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// All training questions with one answer, concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDocument {
    pub answer_label: String,
    pub term_frequencies: BTreeMap<String, u64>,
    pub length: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: usize,
    pub tf: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub documents: Vec<AnswerDocument>,
    pub avg_doc_length: f64,
    pub k1: f64,
    pub b: f64,
    pub n_docs: usize,
    /// Fingerprint of the indexed (label, term, tf) content.
    pub fingerprint: String,
}

/// Builds the index; `<unk>` tokens are not indexed.
pub fn build_index(train: &Corpus, k1: f64, b: f64) -> Result<InvertedIndex> {
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if !(k1 >= 0.0 && (0.0..=1.0).contains(&b)) {
        return Err(Error::InvalidArgument(format!(
            "bad BM25 parameters k1={k1}, b={b}"
        )));
    }
    let mut docs: BTreeMap<&str, BTreeMap<String, u64>> = BTreeMap::new();
    for q in train.questions() {
        let tf = docs.entry(q.answer_label.as_str()).or_default();
        for t in q.tokens().filter(|t| !t.is_unk) {
            *tf.entry(t.surface.clone()).or_default() += 1;
        }
    }
    let documents: Vec<AnswerDocument> = docs
        .into_iter()
        .map(|(label, term_frequencies)| AnswerDocument {
            answer_label: label.to_string(),
            length: term_frequencies.values().sum(),
            term_frequencies,
        })
        .collect();
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut canon = String::new();
    for (doc, d) in documents.iter().enumerate() {
        canon.push_str(&d.answer_label);
        canon.push('\n');
        for (term, &tf) in &d.term_frequencies {
            postings
                .entry(term.clone())
                .or_default()
                .push(Posting { doc, tf });
            canon.push_str(&format!("\t{term}\t{tf}\n"));
        }
    }
    let n_docs = documents.len();
    let avg_doc_length = documents.iter().map(|d| d.length as f64).sum::<f64>() / n_docs as f64;
    Ok(InvertedIndex {
        postings,
        documents,
        avg_doc_length,
        k1,
        b,
        n_docs,
        fingerprint: crate::util::fingerprint(canon.as_bytes()),
    })
}

impl InvertedIndex {
    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// ln(1 + (N − df + 0.5) / (df + 0.5)), never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, tf: u64, doc: usize) -> f64 {
        let tf = tf as f64;
        let len = self.documents[doc].length as f64;
        // Guard the degenerate all-empty index (every query scores 0 anyway).
        let norm = if self.avg_doc_length > 0.0 {
            len / self.avg_doc_length
        } else {
            1.0
        };
        tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * norm))
    }

    /// BM25 score of one document. Each query occurrence of a term counts.
    pub fn bm25_score<S: AsRef<str>>(&self, query: &[S], doc: usize) -> Result<f64> {
        let d = self
            .documents
            .get(doc)
            .ok_or_else(|| Error::InvalidArgument(format!("no document {doc}")))?;
        Ok(query
            .iter()
            .filter_map(|t| {
                let term = t.as_ref();
                d.term_frequencies
                    .get(term)
                    .map(|&tf| self.idf(term) * self.term_weight(tf, doc))
            })
            .sum())
    }

    /// Scores every document through the postings lists.
    fn score_all<S: AsRef<str>>(&self, query: &[S]) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_docs];
        for t in query {
            let term = t.as_ref();
            if let Some(list) = self.postings.get(term) {
                let idf = self.idf(term);
                for p in list {
                    scores[p.doc] += idf * self.term_weight(p.tf, p.doc);
                }
            }
        }
        scores
    }

    /// Top-`k` (label, score) for a token query, score descending, ties by
    /// label. `<unk>` never matches since it is never indexed.
    pub fn rank<S: AsRef<str>>(&self, query: &[S], k: usize) -> Vec<(String, f64)> {
        let scores = self.score_all(query);
        let mut ranked: Vec<(String, f64)> = self
            .documents
            .iter()
            .zip(scores)
            .map(|(d, s)| (d.answer_label.clone(), s))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k.min(self.n_docs));
        ranked
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("index serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let index: InvertedIndex = serde_json::from_str(text)?;
        if index
            .postings
            .values()
            .flatten()
            .any(|p| p.doc >= index.documents.len())
        {
            return Err(Error::Validation(
                "posting refers to a missing document".into(),
            ));
        }
        Ok(index)
    }
}

/// Ranks answers for a question used as a query.
pub fn query(index: &InvertedIndex, question: &Question, k: usize) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let terms: Vec<&str> = question
        .tokens()
        .filter(|t| !t.is_unk)
        .map(|t| t.surface.as_str())
        .collect();
    Ok(index.rank(&terms, k))
}
