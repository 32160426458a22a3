use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Corpus, UNK};
use crate::error::{Error, Result};

/// Word ↔ id map. Id 0 is always `<unk>`; ids are dense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    words: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    words: Vec<String>,
    freqs: Vec<u64>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(repr: VocabularyRepr) -> Result<Self> {
        Vocabulary::from_parts(repr.words, repr.freqs)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            words: v.words,
            freqs: v.freqs,
        }
    }
}

impl Vocabulary {
    pub(crate) fn from_parts(words: Vec<String>, freqs: Vec<u64>) -> Result<Self> {
        if words.first().map(String::as_str) != Some(UNK) || words.len() != freqs.len() {
            return Err(Error::Validation(
                "vocabulary must start with <unk> and have one frequency per word".into(),
            ));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate vocabulary word '{w}'"
                )));
            }
        }
        Ok(Vocabulary {
            words,
            freqs,
            index,
        })
    }

    /// Builds a vocabulary from an explicit word list with unit frequencies.
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![UNK.to_string()];
        all.extend(words.into_iter().map(Into::into).filter(|w| w != UNK));
        let freqs = std::iter::once(0)
            .chain(std::iter::repeat(1))
            .take(all.len())
            .collect();
        Vocabulary::from_parts(all, freqs)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    /// True when only `<unk>` is present.
    pub fn is_empty(&self) -> bool {
        self.words.len() <= 1
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Id for a word, falling back to the `<unk>` row.
    pub fn id_or_unk(&self, word: &str) -> usize {
        self.id(word).unwrap_or(0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn frequency(&self, word: &str) -> Option<u64> {
        self.id(word).map(|i| self.freqs[i])
    }

    /// Non-reserved words in id order.
    pub fn words(&self) -> &[String] {
        &self.words[1..]
    }

    pub fn fingerprint(&self) -> String {
        crate::util::fingerprint(self.words.join("\n").as_bytes())
    }
}

/// `<unk>` plus the `max_size` most frequent surfaces of the corpus, ties
/// broken lexicographically.
pub fn build_vocabulary(corpus: &Corpus, max_size: usize) -> Result<Vocabulary> {
    if max_size == 0 {
        return Err(Error::InvalidArgument("max_size must be positive".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for q in corpus.questions() {
        for t in q.tokens().filter(|t| !t.is_unk) {
            *counts.entry(t.surface.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);

    let mut words = vec![UNK.to_string()];
    let mut freqs = vec![0];
    for (w, f) in ranked {
        words.push(w.to_string());
        freqs.push(f);
    }
    Vocabulary::from_parts(words, freqs)
}
