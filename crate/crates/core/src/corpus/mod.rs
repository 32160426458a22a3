//! Question corpora: data model, JSONL ingestion, vocabularies, splits and
//! the synthetic toy generator.

mod split;
mod toy;
mod vocab;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub use split::{split_corpus, Split};
pub use toy::{generate_toy_corpus, generate_toy_corpus_with, ToyProfile};
pub use vocab::{build_vocabulary, Vocabulary};

/// Reserved surface emitted for unrecognized words.
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub surface: String,
    pub confidence: f64,
    pub is_unk: bool,
}

impl Token {
    /// A clean-text token (confidence 1).
    pub fn clean(surface: impl Into<String>) -> Self {
        Self::with_confidence(surface, 1.0)
    }

    pub fn with_confidence(surface: impl Into<String>, confidence: f64) -> Self {
        let surface = surface.into();
        let is_unk = surface == UNK;
        Token {
            surface,
            confidence,
            is_unk,
        }
    }

    pub fn unk(confidence: f64) -> Self {
        Token {
            surface: UNK.to_string(),
            confidence,
            is_unk: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.surface.is_empty() {
            return Err(Error::Validation("token surface is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::Validation(format!(
                "confidence {} of '{}' is outside [0, 1]",
                self.confidence, self.surface
            )));
        }
        if self.is_unk != (self.surface == UNK) {
            return Err(Error::Validation(format!(
                "is_unk flag inconsistent with surface '{}'",
                self.surface
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence { tokens }
    }

    /// Builds a clean sentence from raw text.
    pub fn from_text(text: &str) -> Self {
        Sentence::new(tokenize(text).into_iter().map(Token::clean).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Clean,
    Corrupted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Question {
    pub id: String,
    pub answer_label: String,
    pub sentences: Vec<Sentence>,
    pub source: Source,
    pub metadata: BTreeMap<String, Value>,
}

impl Question {
    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// All surfaces of the question, sentence order preserved.
    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens().map(|t| t.surface.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("question id is empty".into()));
        }
        if self.answer_label.is_empty() {
            return Err(Error::Validation(format!(
                "question {} has an empty answer label",
                self.id
            )));
        }
        if self.sentences.is_empty() {
            return Err(Error::Validation(format!(
                "question {} has no sentences",
                self.id
            )));
        }
        for s in &self.sentences {
            if s.is_empty() {
                return Err(Error::Validation(format!(
                    "question {} has an empty sentence",
                    self.id
                )));
            }
            for t in &s.tokens {
                t.validate()?;
                if self.source == Source::Clean && t.confidence != 1.0 {
                    return Err(Error::Validation(format!(
                        "clean question {} has token '{}' with confidence {}",
                        self.id, t.surface, t.confidence
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Restricts a question to its first sentence (the start-of-question view).
pub fn first_sentence_view(question: &Question) -> Question {
    Question {
        id: format!("{}#s1", question.id),
        answer_label: question.answer_label.clone(),
        sentences: question.sentences.iter().take(1).cloned().collect(),
        source: question.source,
        metadata: question.metadata.clone(),
    }
}

/// Where in a question a system is asked to answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    /// After the first sentence only.
    Start,
    /// After the full question.
    End,
}

impl Position {
    pub const BOTH: [Position; 2] = [Position::Start, Position::End];

    /// The part of `question` visible at this position.
    pub fn view(self, question: &Question) -> std::borrow::Cow<'_, Question> {
        match self {
            Position::Start => std::borrow::Cow::Owned(first_sentence_view(question)),
            Position::End => std::borrow::Cow::Borrowed(question),
        }
    }
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Position::Start => "start",
            Position::End => "end",
        })
    }
}

impl std::str::FromStr for Position {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "start" => Ok(Position::Start),
            "end" => Ok(Position::End),
            other => Err(format!("unknown position '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    questions: Vec<Question>,
    answer_set: BTreeSet<String>,
}

impl Corpus {
    pub fn new(questions: Vec<Question>) -> Self {
        let answer_set = questions.iter().map(|q| q.answer_label.clone()).collect();
        Corpus {
            questions,
            answer_set,
        }
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn answer_set(&self) -> &BTreeSet<String> {
        &self.answer_set
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn into_questions(self) -> Vec<Question> {
        self.questions
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for q in &self.questions {
            q.validate()?;
            if !ids.insert(q.id.as_str()) {
                return Err(Error::Validation(format!("duplicate question id {}", q.id)));
            }
        }
        Ok(())
    }

    /// Serializes to the JSONL interchange format, one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for q in &self.questions {
            let record = Record::from(q);
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, path: &Path) -> Result<Corpus> {
        let mut questions = Vec::new();
        let mut ids = BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let record: Record =
                serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            let question = record
                .into_question()
                .map_err(|e| parse_err(e.to_string()))?;
            question.validate().map_err(|e| parse_err(e.to_string()))?;
            if !ids.insert(question.id.clone()) {
                return Err(parse_err(format!("duplicate question id {}", question.id)));
            }
            questions.push(question);
        }
        Ok(Corpus::new(questions))
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_jsonl(&text, path)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    crate::util::write_atomic(path, corpus.to_jsonl().as_bytes())
}

/// Lowercases, splits on Unicode whitespace and strips surrounding
/// punctuation. The reserved `<unk>` surface passes through untouched.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            if lower == UNK {
                return Some(lower);
            }
            let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
            (!trimmed.is_empty()).then(|| trimmed.to_string())
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TokenRecord {
    w: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentences: Option<Vec<Vec<TokenRecord>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentences_text: Option<Vec<String>>,
    #[serde(default = "default_source")]
    source: Source,
    #[serde(default)]
    meta: BTreeMap<String, Value>,
}

fn default_source() -> Source {
    Source::Clean
}

impl Record {
    fn into_question(self) -> Result<Question> {
        let answer_label = self
            .answer
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::Validation("missing answer label".into()))?;
        let sentences = match (self.sentences, self.sentences_text) {
            (Some(sentences), _) => sentences
                .into_iter()
                .map(|toks| {
                    Sentence::new(
                        toks.into_iter()
                            .map(|t| Token::with_confidence(t.w.to_lowercase(), t.c.unwrap_or(1.0)))
                            .collect(),
                    )
                })
                .collect(),
            (None, Some(texts)) => texts.iter().map(|t| Sentence::from_text(t)).collect(),
            (None, None) => {
                return Err(Error::Validation(
                    "record needs `sentences` or `sentences_text`".into(),
                ))
            }
        };
        Ok(Question {
            id: self.id,
            answer_label,
            sentences,
            source: self.source,
            metadata: self.meta,
        })
    }
}

impl From<&Question> for Record {
    fn from(q: &Question) -> Self {
        Record {
            id: q.id.clone(),
            answer: Some(q.answer_label.clone()),
            sentences: Some(
                q.sentences
                    .iter()
                    .map(|s| {
                        s.tokens
                            .iter()
                            .map(|t| TokenRecord {
                                w: t.surface.clone(),
                                c: Some(t.confidence),
                            })
                            .collect()
                    })
                    .collect(),
            ),
            sentences_text: None,
            source: q.source,
            meta: q.metadata.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Corpus> {
        Corpus::from_jsonl(text, Path::new("test.jsonl"))
    }

    #[test]
    fn loads_two_records() {
        let text = concat!(
            r#"{"id":"a","answer":"x","sentences":[[{"w":"hello"},{"w":"world"}]]}"#,
            "\n",
            r#"{"id":"b","answer":"y","sentences_text":["For ten points, name this!"]}"#,
            "\n"
        );
        let corpus = parse(text).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(
            corpus.questions()[1].surfaces(),
            vec!["for", "ten", "points", "name", "this"]
        );
        assert_eq!(corpus.answer_set().len(), 2);
    }

    #[test]
    fn missing_answer_names_the_line() {
        let text = concat!(
            r#"{"id":"a","answer":"x","sentences_text":["one"]}"#,
            "\n",
            r#"{"id":"b","sentences_text":["two"]}"#,
            "\n"
        );
        match parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn confidences_are_preserved_exactly() {
        let text = r#"{"id":"a","answer":"x","source":"corrupted","sentences":[[{"w":"for","c":0.935},{"w":"ten","c":0.935},{"w":"points","c":0.871}]]}"#;
        let corpus = parse(text).unwrap();
        let confs: Vec<f64> = corpus.questions()[0]
            .tokens()
            .map(|t| t.confidence)
            .collect();
        assert_eq!(confs, vec![0.935, 0.935, 0.871]);
    }

    #[test]
    fn out_of_range_confidence_is_rejected() {
        let text =
            r#"{"id":"a","answer":"x","source":"corrupted","sentences":[[{"w":"for","c":1.2}]]}"#;
        assert!(matches!(parse(text), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn clean_source_requires_unit_confidence() {
        let text = r#"{"id":"a","answer":"x","sentences":[[{"w":"for","c":0.5}]]}"#;
        assert!(parse(text).is_err());
    }

    #[test]
    fn tokenizer_strips_punctuation_and_keeps_unk() {
        assert_eq!(
            tokenize("  \"Monte   Cristo,\" <unk> ...  Dumas's"),
            vec!["monte", "cristo", "<unk>", "dumas's"]
        );
    }

    #[test]
    fn first_sentence_view_keeps_sentence_one() {
        let q = Question {
            id: "q1".into(),
            answer_label: "a".into(),
            sentences: vec![
                Sentence::new(vec![Token::with_confidence("x", 0.4)]),
                Sentence::from_text("y z"),
            ],
            source: Source::Corrupted,
            metadata: BTreeMap::new(),
        };
        let v = first_sentence_view(&q);
        assert_eq!(v.id, "q1#s1");
        assert_eq!(v.sentences.len(), 1);
        assert_eq!(v.sentences[0].tokens[0].confidence, 0.4);
        let again = first_sentence_view(&Question {
            sentences: v.sentences.clone(),
            ..q.clone()
        });
        assert_eq!(again.sentences, v.sentences);
    }
}
