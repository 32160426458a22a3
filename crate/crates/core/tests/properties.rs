use std::collections::BTreeSet;

use noisyqa::channel::{channel_stats, corrupt_corpus, decoder_for, ChannelConfig, OovBehavior};
use noisyqa::corpus::{
    build_vocabulary, generate_toy_corpus, load_corpus, save_corpus, split_corpus, Corpus,
    Question, Sentence, Source, Token, UNK,
};
use noisyqa::dan::{
    encode_confidence_weighted, forward, DanInput, DanParameters, DanShape, Mode, Nonlinearity,
    Variant,
};
use noisyqa::index::build_index;
use noisyqa::metrics::{avg_sentence_tfidf, bleu, fit_tfidf, wer};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn word_corpus(rows: &[(usize, Vec<u8>)]) -> Corpus {
    Corpus::new(
        rows.iter()
            .enumerate()
            .map(|(i, (answer, words))| Question {
                id: format!("q{i:04}"),
                answer_label: format!("a{answer}"),
                sentences: vec![Sentence::new(
                    words
                        .iter()
                        .map(|w| Token::clean(format!("w{w}")))
                        .collect(),
                )],
                source: Source::Clean,
                metadata: Default::default(),
            })
            .collect(),
    )
}

fn rows() -> impl Strategy<Value = Vec<(usize, Vec<u8>)>> {
    prop::collection::vec((0usize..6, prop::collection::vec(0u8..30, 1..12)), 1..40)
}

fn network(variant: Variant, seed: u64) -> DanParameters {
    let shape = DanShape {
        vocab_size: 20,
        embedding_dim: 6,
        hidden_dims: vec![5],
        n_classes: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DanParameters::init(&shape, variant, Nonlinearity::Tanh, false, &mut rng).unwrap()
}

fn input() -> impl Strategy<Value = DanInput> {
    prop::collection::vec((0usize..20, 0.0f64..=1.0), 1..10).prop_map(|pairs| {
        let (ids, conf) = pairs.into_iter().unzip();
        DanInput::new(ids, conf)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_partition(rows in rows(), seed in any::<u64>()) {
        let corpus = word_corpus(&rows);
        let s = split_corpus(&corpus, (0.6, 0.2, 0.2), seed).unwrap();
        let mut ids: Vec<&str> = [&s.train, &s.dev, &s.test]
            .iter()
            .flat_map(|c| c.questions().iter().map(|q| q.id.as_str()))
            .collect();
        prop_assert_eq!(ids.len(), corpus.len());
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), corpus.len());
    }

    #[test]
    fn vocabulary_grows_monotonically(rows in rows(), k in 1usize..40) {
        let corpus = word_corpus(&rows);
        let small = build_vocabulary(&corpus, k).unwrap();
        let large = build_vocabulary(&corpus, k + 1).unwrap();
        for w in small.words() {
            prop_assert!(large.contains(w));
        }
        prop_assert_eq!(small.id(UNK), Some(0));
        prop_assert!(small.len() <= k + 1);
    }

    #[test]
    fn corpus_round_trips(rows in rows()) {
        let corpus = word_corpus(&rows);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&corpus, &path).unwrap();
        prop_assert_eq!(load_corpus(&path).unwrap(), corpus);
    }

    #[test]
    fn wer_zero_exactly_on_equal(r in prop::collection::vec(0u8..3, 1..8), h in prop::collection::vec(0u8..3, 0..8)) {
        prop_assert_eq!(wer(&r, &h).unwrap() == 0.0, r == h);
        // Relabeling every symbol the same way changes nothing.
        let rr: Vec<u8> = r.iter().map(|x| (x + 1) % 3).collect();
        let hh: Vec<u8> = h.iter().map(|x| (x + 1) % 3).collect();
        prop_assert_eq!(wer(&r, &h).unwrap(), wer(&rr, &hh).unwrap());
    }

    #[test]
    fn bleu_is_bounded(r in prop::collection::vec(0u8..5, 1..15), h in prop::collection::vec(0u8..5, 1..15)) {
        let b = bleu(&r, &h, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert_eq!(bleu(&r, &r, 4).unwrap(), 1.0);
    }

    #[test]
    fn sentence_tfidf_ignores_order(rows in rows(), seed in any::<u64>()) {
        let corpus = word_corpus(&rows);
        let model = fit_tfidf(&corpus).unwrap();
        let mut reversed: Vec<Question> = corpus.questions().to_vec();
        reversed.reverse();
        let model_rev = fit_tfidf(&Corpus::new(reversed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for q in corpus.questions() {
            let s = &q.sentences[0];
            let mut shuffled = s.tokens.clone();
            shuffled.shuffle(&mut rng);
            let a = avg_sentence_tfidf(&model, s);
            prop_assert!((a - avg_sentence_tfidf(&model, &Sentence::new(shuffled))).abs() < 1e-12);
            prop_assert!((a - avg_sentence_tfidf(&model_rev, s)).abs() < 1e-12);
        }
    }

    #[test]
    fn bm25_is_order_independent_and_non_negative(rows in rows(), q in prop::collection::vec(0u8..30, 1..6)) {
        let corpus = word_corpus(&rows);
        let mut reversed: Vec<Question> = corpus.questions().to_vec();
        reversed.reverse();
        let a = build_index(&corpus, 1.2, 0.75).unwrap();
        let b = build_index(&Corpus::new(reversed), 1.2, 0.75).unwrap();
        let terms: Vec<String> = q.iter().map(|w| format!("w{w}")).collect();
        let ra = a.rank(&terms, a.n_docs);
        prop_assert_eq!(&ra, &b.rank(&terms, b.n_docs));
        prop_assert!(ra.iter().all(|(_, s)| *s >= 0.0));
    }

    #[test]
    fn variants_collapse_on_full_confidence(ids in prop::collection::vec(0usize..20, 1..10), seed in any::<u64>()) {
        let plain = network(Variant::Plain, seed);
        let batch = [DanInput::clean(ids)];
        let (p, _) = forward(&plain, &batch, Mode::Eval).unwrap();
        for v in [Variant::ConfWeighted, Variant::ConfLearned] {
            let mut other = plain.clone();
            other.variant = v;
            let (q, _) = forward(&other, &batch, Mode::Eval).unwrap();
            for (x, y) in p[0].iter().zip(&q[0]) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn encoders_ignore_token_order(x in input(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..x.token_ids.len()).collect();
        order.shuffle(&mut rng);
        let y = DanInput::new(
            order.iter().map(|&i| x.token_ids[i]).collect(),
            order.iter().map(|&i| x.confidences[i]).collect(),
        );
        for v in Variant::ALL {
            let params = network(v, seed);
            let (p, _) = forward(&params, std::slice::from_ref(&x), Mode::Eval).unwrap();
            let (q, _) = forward(&params, std::slice::from_ref(&y), Mode::Eval).unwrap();
            for (a, b) in p[0].iter().zip(&q[0]) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn outputs_are_distributions(batch in prop::collection::vec(input(), 1..5), seed in any::<u64>()) {
        for v in Variant::ALL {
            let (probs, _) = forward(&network(v, seed), &batch, Mode::Eval).unwrap();
            for p in probs {
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(p.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn confidence_weighting_is_linear_per_token(x in input(), t in 0.0f64..=1.0, seed in any::<u64>()) {
        let params = network(Variant::ConfWeighted, seed);
        let at = |c: f64| {
            let mut conf = x.confidences.clone();
            conf[0] = c;
            encode_confidence_weighted(&params.embeddings, &x.token_ids, &conf).unwrap()
        };
        let (r0, r1, rt) = (at(0.0), at(1.0), at(t));
        for i in 0..r0.len() {
            prop_assert!((rt[i] - (r0[i] + t * (r1[i] - r0[i]))).abs() <= 1e-12);
        }
    }
}

fn small_toy() -> Corpus {
    generate_toy_corpus(40, 400, 9)
}

#[test]
fn raising_substitution_never_lowers_mean_wer() {
    let corpus = small_toy();
    let mut previous = 0.0;
    for rate in [0.0, 0.1, 0.2, 0.3, 0.45, 0.6] {
        let mean: f64 = (0..5)
            .map(|seed| {
                let config = ChannelConfig {
                    substitution_rate: rate,
                    seed,
                    ..ChannelConfig::default()
                };
                let noisy = corrupt_corpus(&corpus, &config).unwrap();
                let tfidf = fit_tfidf(&corpus).unwrap();
                channel_stats(&corpus, &noisy, &tfidf).unwrap().corpus_wer
            })
            .sum::<f64>()
            / 5.0;
        assert!(mean >= previous, "rate {rate}: {mean} < {previous}");
        previous = mean;
    }
}

#[test]
fn changed_words_carry_lower_confidence() {
    let corpus = small_toy();
    for (seed, oov) in [(1, OovBehavior::EmitUnk), (2, OovBehavior::ForcedDecode)] {
        let config = ChannelConfig {
            deletion_rate: 0.0,
            oov_behavior: oov,
            seed,
            ..ChannelConfig::default()
        };
        let noisy = corrupt_corpus(&corpus, &config).unwrap();
        let (mut kept, mut changed) = (Vec::new(), Vec::new());
        for (c, n) in corpus.questions().iter().zip(noisy.questions()) {
            for (a, b) in c.tokens().zip(n.tokens()) {
                if a.surface == b.surface {
                    kept.push(b.confidence);
                } else {
                    changed.push(b.confidence);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(!changed.is_empty());
        assert!(mean(&kept) > mean(&changed), "{oov}");
    }
}

#[test]
fn transcripts_stay_inside_the_decoder_vocabulary() {
    let corpus = small_toy();
    for oov in [OovBehavior::EmitUnk, OovBehavior::ForcedDecode] {
        let config = ChannelConfig {
            oov_behavior: oov,
            seed: 4,
            ..ChannelConfig::default()
        };
        let decoder = decoder_for(&corpus, &config).unwrap();
        let noisy = corrupt_corpus(&corpus, &config).unwrap();
        let surfaces: BTreeSet<&str> = noisy
            .questions()
            .iter()
            .flat_map(|q| q.tokens().map(|t| t.surface.as_str()))
            .collect();
        for s in &surfaces {
            assert!(*s == UNK || decoder.contains(s), "{s}");
        }
        if oov == OovBehavior::ForcedDecode {
            assert!(!surfaces.contains(UNK));
        }
    }
}

#[test]
fn deletion_shortens_sentences_on_average() {
    let corpus = small_toy();
    let tfidf = fit_tfidf(&corpus).unwrap();
    let (mut clean, mut noisy) = (0.0, 0.0);
    for seed in 0..5 {
        let config = ChannelConfig {
            seed,
            ..ChannelConfig::default()
        };
        let s = channel_stats(&corpus, &corrupt_corpus(&corpus, &config).unwrap(), &tfidf).unwrap();
        clean += s.mean_len_clean;
        noisy += s.mean_len_corrupted;
    }
    assert!(noisy < clean);
}
