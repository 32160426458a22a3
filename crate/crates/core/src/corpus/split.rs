use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    /// Fraction of test questions whose answer never occurs in train.
    pub unanswerable_fraction: f64,
}

/// Deterministic, answer-stratified partition.
///
/// Each answer's questions are spread over the unit interval in shuffled
/// order; the corpus is then cut at the requested ratios, so every answer
/// contributes roughly proportionally to each part. Answers with very few
/// questions can still land entirely outside train.
pub fn split_corpus(corpus: &Corpus, ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let (r_train, r_dev, r_test) = ratios;
    if [r_train, r_dev, r_test].iter().any(|r| !(*r > 0.0))
        || ((r_train + r_dev + r_test) - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }

    let n = corpus.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut by_answer: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        by_answer
            .entry(corpus.questions()[i].answer_label.as_str())
            .or_default()
            .push(i);
    }
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    for members in by_answer.values() {
        let offset: f64 = rng.gen();
        let m = members.len() as f64;
        for (rank, &i) in members.iter().enumerate() {
            let key = (rank as f64 + offset) / m;
            keyed.push((key, rank, i));
        }
    }
    let shuffle_pos: Vec<usize> = {
        let mut pos = vec![0; n];
        for (p, &i) in order.iter().enumerate() {
            pos[i] = p;
        }
        pos
    };
    keyed.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| shuffle_pos[a.2].cmp(&shuffle_pos[b.2]))
    });

    let n_train = ((n as f64 * r_train).round() as usize).min(n);
    let n_dev = ((n as f64 * r_dev).round() as usize).min(n - n_train);

    let pick = |range: std::ops::Range<usize>| {
        let mut idx: Vec<usize> = keyed[range].iter().map(|k| k.2).collect();
        idx.sort_unstable();
        Corpus::new(
            idx.into_iter()
                .map(|i| corpus.questions()[i].clone())
                .collect(),
        )
    };
    let train = pick(0..n_train);
    let dev = pick(n_train..n_train + n_dev);
    let test = pick(n_train + n_dev..n);

    let unanswerable = test
        .questions()
        .iter()
        .filter(|q| !train.answer_set().contains(&q.answer_label))
        .count();
    let unanswerable_fraction = if test.is_empty() {
        0.0
    } else {
        unanswerable as f64 / test.len() as f64
    };
    Ok(Split {
        train,
        dev,
        test,
        unanswerable_fraction,
    })
}
