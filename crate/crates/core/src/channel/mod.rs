//! Simulated speech-recognition channel.
//!
//! Clean questions pass through a parametric corruption process: a limited
//! decoder vocabulary, random deletions, sound-alike substitutions, and
//! either `<unk>` emission or forced decoding for out-of-vocabulary words.
//! Every emitted word carries a synthetic confidence.

mod phonetic;
mod stats;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::KeyValues;
use crate::corpus::{build_vocabulary, Corpus, Question, Sentence, Source, Token};
use crate::error::{Error, Result};

pub use phonetic::{forced_decode, phonetic_key, surface_similarity, Decoder, PhoneticKey};
pub use stats::{channel_stats, CorruptionStats};

/// Decoder vocabulary to source vocabulary ratio of the reference
/// recognizer (42,000 decodable words for 263,271 source types).
pub const DECODER_VOCAB_RATIO: f64 = 42_000.0 / 263_271.0;
pub const MAX_DECODER_VOCAB: usize = 42_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovBehavior {
    EmitUnk,
    ForcedDecode,
}

impl fmt::Display for OovBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OovBehavior::EmitUnk => "emit_unk",
            OovBehavior::ForcedDecode => "forced_decode",
        })
    }
}

impl FromStr for OovBehavior {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "emit_unk" => Ok(OovBehavior::EmitUnk),
            "forced_decode" => Ok(OovBehavior::ForcedDecode),
            other => Err(format!("unknown oov behavior '{other}'")),
        }
    }
}

/// Bounded confidence distribution: a Gaussian truncated to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceDist {
    pub mean: f64,
    pub spread: f64,
}

impl ConfidenceDist {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.spread <= 0.0 {
            return self.mean.clamp(0.0, 1.0);
        }
        let normal = Normal::new(self.mean, self.spread).expect("finite spread");
        for _ in 0..64 {
            let x = normal.sample(rng);
            if (0.0..=1.0).contains(&x) {
                return x;
            }
        }
        self.mean.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// `None` scales the source vocabulary by [`DECODER_VOCAB_RATIO`].
    pub decoder_vocab_size: Option<usize>,
    pub substitution_rate: f64,
    pub deletion_rate: f64,
    pub oov_behavior: OovBehavior,
    pub confidence_correct: ConfidenceDist,
    pub confidence_corrupt: ConfidenceDist,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            decoder_vocab_size: None,
            substitution_rate: 0.18,
            deletion_rate: 0.13,
            oov_behavior: OovBehavior::EmitUnk,
            confidence_correct: ConfidenceDist {
                mean: 0.93,
                spread: 0.05,
            },
            confidence_corrupt: ConfidenceDist {
                mean: 0.55,
                spread: 0.15,
            },
            seed: 0,
        }
    }
}

const CHANNEL_KEYS: &[&str] = &[
    "decoder_vocab_size",
    "substitution_rate",
    "deletion_rate",
    "oov_behavior",
    "confidence_correct_mean",
    "confidence_correct_spread",
    "confidence_corrupt_mean",
    "confidence_corrupt_spread",
    "seed",
];

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("substitution_rate", self.substitution_rate),
            ("deletion_rate", self.deletion_rate),
            ("confidence_correct_mean", self.confidence_correct.mean),
            ("confidence_corrupt_mean", self.confidence_corrupt.mean),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} = {r} is outside [0, 1]")));
            }
        }
        for (name, s) in [
            ("confidence_correct_spread", self.confidence_correct.spread),
            ("confidence_corrupt_spread", self.confidence_corrupt.spread),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} = {s} must be finite and >= 0"
                )));
            }
        }
        if self.decoder_vocab_size == Some(0) {
            return Err(Error::Config("decoder_vocab_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Decoder vocabulary size for a source vocabulary of `clean_types` words.
    pub fn resolved_decoder_vocab_size(&self, clean_types: usize) -> usize {
        self.decoder_vocab_size.unwrap_or_else(|| {
            ((clean_types as f64 * DECODER_VOCAB_RATIO).ceil() as usize).clamp(1, MAX_DECODER_VOCAB)
        })
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(CHANNEL_KEYS)?;
        let d = ChannelConfig::default();
        let decoder_vocab_size = match kv.get("decoder_vocab_size") {
            None | Some("auto") => None,
            Some(_) => Some(kv.get_or("decoder_vocab_size", 0usize)?),
        };
        let config = ChannelConfig {
            decoder_vocab_size,
            substitution_rate: kv.get_or("substitution_rate", d.substitution_rate)?,
            deletion_rate: kv.get_or("deletion_rate", d.deletion_rate)?,
            oov_behavior: kv.get_or("oov_behavior", d.oov_behavior)?,
            confidence_correct: ConfidenceDist {
                mean: kv.get_or("confidence_correct_mean", d.confidence_correct.mean)?,
                spread: kv.get_or("confidence_correct_spread", d.confidence_correct.spread)?,
            },
            confidence_corrupt: ConfidenceDist {
                mean: kv.get_or("confidence_corrupt_mean", d.confidence_corrupt.mean)?,
                spread: kv.get_or("confidence_corrupt_spread", d.confidence_corrupt.spread)?,
            },
            seed: kv.get_or("seed", d.seed)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        match self.decoder_vocab_size {
            Some(n) => kv.set("decoder_vocab_size", n),
            None => kv.set("decoder_vocab_size", "auto"),
        }
        kv.set("substitution_rate", self.substitution_rate);
        kv.set("deletion_rate", self.deletion_rate);
        kv.set("oov_behavior", self.oov_behavior);
        kv.set("confidence_correct_mean", self.confidence_correct.mean);
        kv.set("confidence_correct_spread", self.confidence_correct.spread);
        kv.set("confidence_corrupt_mean", self.confidence_corrupt.mean);
        kv.set("confidence_corrupt_spread", self.confidence_corrupt.spread);
        kv.set("seed", self.seed);
        kv
    }

    pub fn fingerprint(&self) -> String {
        crate::util::fingerprint(self.to_key_values().render().as_bytes())
    }
}

/// Uniform draws consumed per token, in a fixed order, so that changing a
/// rate never shifts the random stream of later tokens.
#[derive(Debug, Clone, Copy)]
pub struct TokenDraws {
    pub deletion: f64,
    pub substitution: f64,
    pub confidence_seed: u64,
}

impl TokenDraws {
    pub fn draw<R: Rng>(rng: &mut R) -> Self {
        TokenDraws {
            deletion: rng.gen(),
            substitution: rng.gen(),
            confidence_seed: rng.gen(),
        }
    }
}

/// Passes one clean token through the channel. `None` means deleted.
pub fn corrupt_token<R: Rng>(
    token: &Token,
    decoder: &Decoder,
    config: &ChannelConfig,
    rng: &mut R,
) -> Result<Option<Token>> {
    let draws = TokenDraws::draw(rng);
    if draws.deletion < config.deletion_rate {
        return Ok(None);
    }
    transcribe(token, decoder, config, draws).map(Some)
}

fn transcribe(
    token: &Token,
    decoder: &Decoder,
    config: &ChannelConfig,
    draws: TokenDraws,
) -> Result<Token> {
    let mut conf_rng = ChaCha8Rng::seed_from_u64(draws.confidence_seed);
    if token.is_unk {
        return Ok(Token::unk(config.confidence_corrupt.sample(&mut conf_rng)));
    }
    if !decoder.contains(&token.surface) {
        return Ok(match config.oov_behavior {
            OovBehavior::EmitUnk => Token::unk(config.confidence_corrupt.sample(&mut conf_rng)),
            OovBehavior::ForcedDecode => {
                let (word, similarity) = decoder.forced_decode(&token.surface)?;
                Token::with_confidence(
                    word,
                    similarity * config.confidence_corrupt.sample(&mut conf_rng),
                )
            }
        });
    }
    if draws.substitution < config.substitution_rate {
        let options = decoder.confusions(&token.surface);
        if !options.is_empty() {
            let (word, similarity) = &options[conf_rng.gen_range(0..options.len())];
            return Ok(Token::with_confidence(
                word.clone(),
                similarity * config.confidence_corrupt.sample(&mut conf_rng),
            ));
        }
    }
    Ok(Token::with_confidence(
        token.surface.clone(),
        config.confidence_correct.sample(&mut conf_rng),
    ))
}

/// Question `index`'s private random stream.
fn question_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn corrupt_question(
    question: &Question,
    index: usize,
    decoder: &Decoder,
    config: &ChannelConfig,
    fingerprint: &str,
) -> Result<Question> {
    let mut rng = question_rng(config.seed, index);
    let mut sentences = Vec::with_capacity(question.sentences.len());
    for sentence in &question.sentences {
        let mut out = Vec::with_capacity(sentence.len());
        let mut last_draws = None;
        for token in &sentence.tokens {
            let draws = TokenDraws::draw(&mut rng);
            last_draws = Some((token, draws));
            if draws.deletion >= config.deletion_rate {
                out.push(transcribe(token, decoder, config, draws)?);
            }
        }
        // A sentence never vanishes entirely: its last word is kept.
        if out.is_empty() {
            if let Some((token, draws)) = last_draws {
                out.push(transcribe(token, decoder, config, draws)?);
            }
        }
        sentences.push(Sentence::new(out));
    }
    let mut metadata = question.metadata.clone();
    metadata.insert("channel".into(), Value::from(fingerprint));
    metadata.insert("channel_seed".into(), Value::from(config.seed));
    metadata.insert(
        "oov_behavior".into(),
        Value::from(config.oov_behavior.to_string()),
    );
    Ok(Question {
        id: question.id.clone(),
        answer_label: question.answer_label.clone(),
        sentences,
        source: Source::Corrupted,
        metadata,
    })
}

/// Decoder over the `resolved_decoder_vocab_size` most frequent words of
/// `corpus`.
pub fn decoder_for(corpus: &Corpus, config: &ChannelConfig) -> Result<Decoder> {
    let clean_types = stats::vocabulary_size(corpus);
    let size = config.resolved_decoder_vocab_size(clean_types);
    Ok(Decoder::new(build_vocabulary(corpus, size)?))
}

/// Corrupts every question of a clean corpus. The decoder vocabulary is
/// drawn from the corpus itself.
pub fn corrupt_corpus(corpus: &Corpus, config: &ChannelConfig) -> Result<Corpus> {
    config.validate()?;
    let decoder = decoder_for(corpus, config)?;
    corrupt_corpus_with(corpus, config, &decoder)
}

pub fn corrupt_corpus_with(
    corpus: &Corpus,
    config: &ChannelConfig,
    decoder: &Decoder,
) -> Result<Corpus> {
    if let Some(q) = corpus
        .questions()
        .iter()
        .find(|q| q.source != Source::Clean)
    {
        return Err(Error::Validation(format!(
            "question {} is not clean; the channel expects clean input",
            q.id
        )));
    }
    let fingerprint = config.fingerprint();
    let questions = corpus
        .questions()
        .iter()
        .enumerate()
        .map(|(i, q)| corrupt_question(q, i, decoder, config, &fingerprint))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(questions))
}
