//! Brute-force reference implementations shared by the oracle tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;

use noisyqa::corpus::{Corpus, Question, Sentence, Source};

/// Exhaustive minimal alignment: tries every edit at every position.
pub fn alignment_cost(r: &[u8], h: &[u8], memo: &mut BTreeMap<(usize, usize), usize>) -> usize {
    if r.is_empty() {
        return h.len();
    }
    if h.is_empty() {
        return r.len();
    }
    if let Some(&c) = memo.get(&(r.len(), h.len())) {
        return c;
    }
    let keep_or_sub = alignment_cost(&r[1..], &h[1..], memo) + usize::from(r[0] != h[0]);
    let delete = alignment_cost(&r[1..], h, memo) + 1;
    let insert = alignment_cost(r, &h[1..], memo) + 1;
    let best = keep_or_sub.min(delete).min(insert);
    memo.insert((r.len(), h.len()), best);
    best
}

pub fn oracle_wer(r: &[u8], h: &[u8]) -> f64 {
    alignment_cost(r, h, &mut BTreeMap::new()) as f64 / r.len() as f64
}

/// Every sequence of length 0..=max_len over `alphabet` symbols.
pub fn all_sequences(max_len: usize, alphabet: u8) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for a in 0..alphabet {
                let mut t: Vec<u8> = s.clone();
                t.push(a);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// One single-sentence question per document, labelled doc00, doc01, ...
pub fn corpus_of(docs: &[Vec<String>]) -> Corpus {
    Corpus::new(
        docs.iter()
            .enumerate()
            .map(|(i, words)| Question {
                id: format!("q{i}"),
                answer_label: format!("doc{i:02}"),
                sentences: vec![Sentence::from_text(&words.join(" "))],
                source: Source::Clean,
                metadata: Default::default(),
            })
            .collect(),
    )
}

/// BM25 straight from the definition, with no index structures.
pub fn brute_bm25(docs: &[Vec<String>], q: &[String], d: usize, k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let len = docs[d].len() as f64;
    q.iter()
        .map(|term| {
            let tf = docs[d].iter().filter(|w| *w == term).count() as f64;
            if tf == 0.0 {
                return 0.0;
            }
            let df = docs.iter().filter(|doc| doc.contains(term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avgdl))
        })
        .sum()
}

/// Brute-force ranking: score descending, ties by label.
pub fn brute_ranking(docs: &[Vec<String>], q: &[String], k1: f64, b: f64) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = (0..docs.len())
        .map(|d| (format!("doc{d:02}"), brute_bm25(docs, q, d, k1, b)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}
