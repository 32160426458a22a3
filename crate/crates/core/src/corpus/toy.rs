//! Synthetic quiz-bowl style corpus.
//!
//! Each answer owns a set of signature words that occur in no other answer's
//! questions. Questions are pyramidal: early sentences draw the answer's
//! rarer signature words, the final sentence carries the giveaway phrase
//! and the most common ones. Signature words are individually rare, so they
//! form the vocabulary's long tail, while a pool of general words shared by
//! all answers fills its head.

use std::collections::{BTreeMap, HashSet};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use super::{Corpus, Question, Sentence, Source, Token};

const FILLER: &[&str] = &[
    "the", "of", "this", "a", "in", "and", "to", "his", "her", "its", "was", "is", "by", "with",
    "that", "one", "on", "as", "from", "he", "she", "it", "which", "these", "an", "at", "after",
    "who", "work", "figure", "were", "their", "also", "into",
];

const CATEGORIES: &[&str] = &[
    "author",
    "novel",
    "battle",
    "scientist",
    "river",
    "painting",
    "opera",
    "king",
    "city",
    "poem",
    "composer",
    "philosopher",
];

const GIVEAWAY: &[&str] = &["for", "ten", "points", "name", "this"];

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br",
    "cr", "dr", "fr", "gr", "pr", "tr", "st", "sl", "pl", "bl", "cl", "ch", "sh", "th",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "ou", "y"];
const CODAS: &[&str] = &["", "", "", "n", "r", "s", "l", "m", "t", "x", "nd", "rk"];

/// Knobs of the generator. The defaults give a long-tailed vocabulary in
/// which roughly a tenth of the tokens, nearly all of them signature words,
/// fall outside the most frequent sixth of the word types.
#[derive(Debug, Clone)]
pub struct ToyProfile {
    pub signature_words: usize,
    pub topic_pool: usize,
    pub topics_per_answer: usize,
    pub sentence_len: (usize, usize),
    pub sentences: (usize, usize),
    /// General words shared by all answers, drawn with Zipf frequencies.
    pub general_pool: usize,
    pub general_slot_prob: f64,
    /// Zipf exponent of general-word frequencies (0 is uniform).
    pub general_zipf: f64,
    /// Clue words in the first and in the last sentence; sentences in
    /// between interpolate.
    pub clue_slots: (usize, usize),
    pub topic_slots: usize,
    /// How strongly sentence position steers clue rarity.
    pub pyramid_skew: f64,
}

impl Default for ToyProfile {
    fn default() -> Self {
        ToyProfile {
            signature_words: 80,
            topic_pool: 300,
            topics_per_answer: 12,
            sentence_len: (14, 22),
            sentences: (4, 6),
            general_pool: 1500,
            general_slot_prob: 0.35,
            general_zipf: 0.5,
            clue_slots: (1, 3),
            topic_slots: 3,
            pyramid_skew: 1.5,
        }
    }
}

struct WordMint {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl WordMint {
    fn new(seed: u64) -> Self {
        let mut used: HashSet<String> = FILLER.iter().map(|s| s.to_string()).collect();
        used.extend(CATEGORIES.iter().map(|s| s.to_string()));
        used.extend(GIVEAWAY.iter().map(|s| s.to_string()));
        WordMint {
            rng: ChaCha8Rng::seed_from_u64(seed),
            used,
        }
    }

    fn fresh(&mut self, syllables: (usize, usize)) -> String {
        loop {
            let n = self.rng.gen_range(syllables.0..=syllables.1);
            let mut w = String::new();
            for _ in 0..n {
                w.push_str(ONSETS.choose(&mut self.rng).unwrap());
                w.push_str(VOWELS.choose(&mut self.rng).unwrap());
            }
            w.push_str(CODAS.choose(&mut self.rng).unwrap());
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn batch(&mut self, n: usize, syllables: (usize, usize)) -> Vec<String> {
        (0..n).map(|_| self.fresh(syllables)).collect()
    }
}

struct AnswerProfile {
    label: String,
    category: &'static str,
    signature: Vec<String>,
    topics: Vec<usize>,
}

/// Toy corpus with the default [`ToyProfile`].
pub fn generate_toy_corpus(n_answers: usize, n_questions: usize, seed: u64) -> Corpus {
    generate_toy_corpus_with(&ToyProfile::default(), n_answers, n_questions, seed)
}

/// # Panics
/// If `n_answers < 2` or `n_questions < n_answers`.
pub fn generate_toy_corpus_with(
    profile: &ToyProfile,
    n_answers: usize,
    n_questions: usize,
    seed: u64,
) -> Corpus {
    assert!(n_answers >= 2, "need at least two answers");
    assert!(
        n_questions >= n_answers,
        "need at least one question per answer"
    );

    let mut mint = WordMint::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let topic_pool = mint.batch(profile.topic_pool, (2, 2));
    let answers: Vec<AnswerProfile> = (0..n_answers)
        .map(|_| {
            let first = capitalize(&mint.fresh((1, 2)));
            let last = capitalize(&mint.fresh((2, 3)));
            AnswerProfile {
                label: format!("{first} {last}"),
                category: CATEGORIES.choose(&mut rng).unwrap(),
                signature: mint.batch(profile.signature_words, (2, 3)),
                topics: rand::seq::index::sample(
                    &mut rng,
                    topic_pool.len(),
                    profile.topics_per_answer,
                )
                .into_vec(),
            }
        })
        .collect();
    let general_pool = mint.batch(profile.general_pool, (1, 3));
    let general_dist = (!general_pool.is_empty()).then(|| {
        let weights = (1..=general_pool.len()).map(|r| (r as f64).powf(-profile.general_zipf));
        WeightedIndex::new(weights).expect("positive weights")
    });
    let pools = Pools {
        topics: &topic_pool,
        general: &general_pool,
        general_dist: general_dist.as_ref(),
    };

    let mut assignment: Vec<usize> = (0..n_questions).map(|i| i % n_answers).collect();
    assignment.shuffle(&mut rng);

    let questions = assignment
        .into_iter()
        .enumerate()
        .map(|(qi, ai)| {
            let answer = &answers[ai];
            let n_sent = rng.gen_range(profile.sentences.0..=profile.sentences.1);
            let sentences = (0..n_sent)
                .map(|si| {
                    let position = si as f64 / (n_sent - 1).max(1) as f64;
                    let last = si + 1 == n_sent;
                    toy_sentence(profile, answer, &pools, position, last, &mut rng)
                })
                .collect();
            let mut metadata = BTreeMap::new();
            metadata.insert("dataset".to_string(), Value::from("toy"));
            metadata.insert("seed".to_string(), Value::from(seed));
            Question {
                id: format!("toy-{qi:05}"),
                answer_label: answer.label.clone(),
                sentences,
                source: Source::Clean,
                metadata,
            }
        })
        .collect();
    Corpus::new(questions)
}

struct Pools<'a> {
    topics: &'a [String],
    general: &'a [String],
    general_dist: Option<&'a WeightedIndex<f64>>,
}

fn toy_sentence(
    profile: &ToyProfile,
    answer: &AnswerProfile,
    pools: &Pools<'_>,
    position: f64,
    last: bool,
    rng: &mut ChaCha8Rng,
) -> Sentence {
    let len = rng.gen_range(profile.sentence_len.0..=profile.sentence_len.1);
    let mut words: Vec<String> = Vec::with_capacity(len + 6);

    // Early sentences favour the tail of the signature list, late ones the head.
    let exponent = -(2.0 * position - 1.0) * profile.pyramid_skew;
    let weights: Vec<f64> = (0..answer.signature.len())
        .map(|r| ((r + 1) as f64).powf(exponent))
        .collect();
    let clue_dist = WeightedIndex::new(&weights).expect("positive weights");
    let (lo, hi) = profile.clue_slots;
    let clues = lo + ((hi.saturating_sub(lo)) as f64 * position).round() as usize;
    for _ in 0..clues {
        words.push(answer.signature[clue_dist.sample(rng)].clone());
    }
    for _ in 0..profile.topic_slots {
        let t = if rng.gen_bool(0.7) {
            *answer.topics.choose(rng).unwrap()
        } else {
            rng.gen_range(0..pools.topics.len())
        };
        words.push(pools.topics[t].clone());
    }
    while words.len() < len {
        match pools.general_dist {
            Some(dist) if rng.gen_bool(profile.general_slot_prob) => {
                words.push(pools.general[dist.sample(rng)].clone())
            }
            _ => words.push(FILLER.choose(rng).unwrap().to_string()),
        }
    }
    words.shuffle(rng);
    if last {
        let mut giveaway: Vec<String> = GIVEAWAY.iter().map(|s| s.to_string()).collect();
        giveaway.push(answer.category.to_string());
        giveaway.extend(words);
        words = giveaway;
    }
    Sentence::new(words.into_iter().map(Token::clean).collect())
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;

    #[test]
    fn shape_of_the_default_corpus() {
        let c = generate_toy_corpus(200, 2000, 1);
        assert_eq!(c.len(), 2000);
        assert_eq!(c.answer_set().len(), 200);
        for q in c.questions() {
            assert!((4..=6).contains(&q.sentences.len()));
            assert!(q.tokens().all(|t| t.confidence == 1.0));
        }
        c.validate().unwrap();
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_toy_corpus(20, 100, 5).to_jsonl();
        let b = generate_toy_corpus(20, 100, 5).to_jsonl();
        let c = generate_toy_corpus(20, 100, 6).to_jsonl();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn signature_words_do_not_cross_answers() {
        // Oracle: a word is a signature word iff it occurs with exactly one
        // answer and is not filler, giveaway, category, topic or general.
        let c = generate_toy_corpus(30, 300, 3);
        let mut owners: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for q in c.questions() {
            for t in q.tokens() {
                owners
                    .entry(&t.surface)
                    .or_default()
                    .insert(&q.answer_label);
            }
        }
        let profile = ToyProfile::default();
        // Regenerate the answer inventory to learn which words are signatures.
        let mut mint = WordMint::new(3 ^ 0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let _topics = mint.batch(profile.topic_pool, (2, 2));
        let mut n_checked = 0;
        for _ in 0..30 {
            let _ = mint.fresh((1, 2));
            let _ = mint.fresh((2, 3));
            let _ = CATEGORIES.choose(&mut rng);
            let sig = mint.batch(profile.signature_words, (2, 3));
            let _ =
                rand::seq::index::sample(&mut rng, profile.topic_pool, profile.topics_per_answer);
            for w in sig {
                if let Some(o) = owners.get(w.as_str()) {
                    assert_eq!(o.len(), 1, "signature word {w} shared by {o:?}");
                    n_checked += 1;
                }
            }
        }
        assert!(n_checked > 200);
    }
}
