//! Sound-alike matching used in place of an acoustic model.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::{Vocabulary, UNK};
use crate::error::{Error, Result};

/// Four-character Soundex-style code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhoneticKey(String);

impl PhoneticKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PhoneticKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn soundex_digit(c: char) -> Option<char> {
    match c {
        'b' | 'f' | 'p' | 'v' => Some('1'),
        'c' | 'g' | 'j' | 'k' | 'q' | 's' | 'x' | 'z' => Some('2'),
        'd' | 't' => Some('3'),
        'l' => Some('4'),
        'm' | 'n' => Some('5'),
        'r' => Some('6'),
        _ => None,
    }
}

/// Keeps the first letter, maps consonant classes to digits, drops vowels,
/// collapses adjacent repeats (h and w do not separate them), then pads or
/// truncates to four characters.
pub fn phonetic_key(word: &str) -> PhoneticKey {
    let lower = word.to_lowercase();
    let mut letters = lower.chars().filter(|c| c.is_ascii_alphabetic());
    let Some(first) = letters.next() else {
        let head = word
            .chars()
            .next()
            .map(|c| c.to_uppercase().to_string())
            .unwrap_or_default();
        return PhoneticKey(format!("{head}000").chars().take(4).collect());
    };
    let mut key = String::with_capacity(4);
    key.push(first.to_ascii_uppercase());
    let mut last = soundex_digit(first);
    for c in letters {
        if key.len() == 4 {
            break;
        }
        match soundex_digit(c) {
            Some(d) => {
                if last != Some(d) {
                    key.push(d);
                }
                last = Some(d);
            }
            None if c == 'h' || c == 'w' => {}
            None => last = None,
        }
    }
    while key.len() < 4 {
        key.push('0');
    }
    PhoneticKey(key)
}

/// 1 − edit distance / longer length.
pub fn surface_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
}

/// Candidate misrecognitions with their surface similarity.
pub type Confusions = Arc<Vec<(String, f64)>>;

/// A decoder vocabulary with precomputed keys and memoized nearest-word
/// lookups.
#[derive(Debug)]
pub struct Decoder {
    vocab: Vocabulary,
    entries: Vec<(String, PhoneticKey)>,
    forced: Mutex<HashMap<String, (String, f64)>>,
    confusions: Mutex<HashMap<String, Confusions>>,
}

/// Largest phonetic-key edit distance at which two words can be confused.
pub const CONFUSION_RADIUS: usize = 1;

impl Decoder {
    pub fn new(vocab: Vocabulary) -> Self {
        let entries = vocab
            .words()
            .iter()
            .filter(|w| w.as_str() != UNK)
            .map(|w| (w.clone(), phonetic_key(w)))
            .collect();
        Decoder {
            vocab,
            entries,
            forced: Mutex::new(HashMap::new()),
            confusions: Mutex::new(HashMap::new()),
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vocab.contains(word)
    }

    /// Nearest in-vocabulary word, ordered by (key distance, surface
    /// distance, spelling). Never `<unk>`.
    pub fn forced_decode(&self, word: &str) -> Result<(String, f64)> {
        if self.entries.is_empty() {
            return Err(Error::Empty("decoder vocabulary"));
        }
        if let Some(hit) = self.forced.lock().unwrap().get(word) {
            return Ok(hit.clone());
        }
        let best = self.nearest(word, None).expect("non-empty vocabulary");
        self.forced
            .lock()
            .unwrap()
            .insert(word.to_string(), best.clone());
        Ok(best)
    }

    /// Nearest in-vocabulary word other than `word` itself, or `None` if the
    /// vocabulary has no other entry.
    pub fn substitute(&self, word: &str) -> Option<(String, f64)> {
        self.confusions(word).first().cloned()
    }

    /// Words `word` can be misheard as: every other entry whose key is
    /// within [`CONFUSION_RADIUS`], ordered as in [`Decoder::forced_decode`].
    /// Falls back to the single nearest entry when none is that close, and
    /// is empty only if the vocabulary has no other entry.
    pub fn confusions(&self, word: &str) -> Confusions {
        if let Some(hit) = self.confusions.lock().unwrap().get(word) {
            return Arc::clone(hit);
        }
        let key = phonetic_key(word);
        let mut close: Vec<(usize, usize, &str)> = self
            .entries
            .iter()
            .filter(|(w, _)| w != word)
            .filter_map(|(w, k)| {
                let d = strsim::levenshtein(key.as_str(), k.as_str());
                (d <= CONFUSION_RADIUS).then(|| (d, strsim::levenshtein(word, w), w.as_str()))
            })
            .collect();
        close.sort_unstable();
        let list: Vec<(String, f64)> = if close.is_empty() {
            self.nearest(word, Some(word)).into_iter().collect()
        } else {
            close
                .into_iter()
                .map(|(_, _, w)| (w.to_string(), surface_similarity(word, w)))
                .collect()
        };
        let list = Arc::new(list);
        self.confusions
            .lock()
            .unwrap()
            .insert(word.to_string(), Arc::clone(&list));
        list
    }

    fn nearest(&self, word: &str, exclude: Option<&str>) -> Option<(String, f64)> {
        let key = phonetic_key(word);
        let mut best_key = usize::MAX;
        let mut shortlist: Vec<&str> = Vec::new();
        for (w, k) in &self.entries {
            if Some(w.as_str()) == exclude {
                continue;
            }
            let d = strsim::levenshtein(key.as_str(), k.as_str());
            if d < best_key {
                best_key = d;
                shortlist.clear();
            }
            if d == best_key {
                shortlist.push(w);
            }
        }
        shortlist
            .into_iter()
            .map(|w| (strsim::levenshtein(word, w), w))
            .min()
            .map(|(_, w)| (w.to_string(), surface_similarity(word, w)))
    }
}

/// One-off forced decode against a vocabulary.
pub fn forced_decode(word: &str, decoder_vocab: &Vocabulary) -> Result<(String, f64)> {
    Decoder::new(decoder_vocab.clone()).forced_decode(word)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys() {
        assert_eq!(phonetic_key("count").as_str(), "C530");
        assert_eq!(phonetic_key("mount").as_str(), "M530");
        assert_eq!(phonetic_key("a").as_str(), "A000");
        assert_eq!(phonetic_key("Robert").as_str(), "R163");
        assert_eq!(phonetic_key("Ashcraft").as_str(), "A261");
        assert_eq!(phonetic_key("Tymczak").as_str(), "T522");
        assert_eq!(phonetic_key("Pfister").as_str(), "P236");
        assert_eq!(phonetic_key("clarendon").as_str(), "C465");
    }

    #[test]
    fn forced_decode_picks_the_sound_alike() {
        let v = Vocabulary::from_words(["campus", "louisiana"]).unwrap();
        let (w, sim) = forced_decode("vampas", &v).unwrap();
        assert_eq!(w, "campus");
        // Two substitutions over six letters.
        assert!((sim - (1.0 - 2.0 / 6.0)).abs() < 1e-15);
        let (same, sim) = forced_decode("campus", &v).unwrap();
        assert_eq!((same.as_str(), sim), ("campus", 1.0));
    }

    #[test]
    fn forced_decode_prefers_a_concrete_word() {
        let v = Vocabulary::from_words(["louisiana", "novel", "the"]).unwrap();
        let (w, _) = forced_decode("louis", &v).unwrap();
        assert_eq!(w, "louisiana");
        assert_ne!(w, UNK);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let v = Vocabulary::from_words(Vec::<String>::new()).unwrap();
        assert!(forced_decode("x", &v).is_err());
    }

    #[test]
    fn substitute_excludes_the_word_itself() {
        let d = Decoder::new(Vocabulary::from_words(["count", "mount", "zebra"]).unwrap());
        assert_eq!(d.substitute("count").unwrap().0, "mount");
        let lonely = Decoder::new(Vocabulary::from_words(["only"]).unwrap());
        assert!(lonely.substitute("only").is_none());
        assert!(lonely.confusions("only").is_empty());
    }

    #[test]
    fn confusions_are_the_sound_alikes() {
        // Keys: count C530, mount M530 (1 edit), county C530 (0 edits),
        // cat C300 (2 edits), zebra Z160.
        let d = Decoder::new(
            Vocabulary::from_words(["count", "mount", "county", "cat", "zebra"]).unwrap(),
        );
        let words: Vec<String> = d
            .confusions("count")
            .iter()
            .map(|(w, _)| w.clone())
            .collect();
        assert_eq!(words, ["county", "mount"]);
        // Nothing within radius 1 of Z160 but itself: fall back to nearest.
        let far: Vec<String> = d
            .confusions("zebra")
            .iter()
            .map(|(w, _)| w.clone())
            .collect();
        assert_eq!(far.len(), 1);
        assert_ne!(far[0], "zebra");
    }
}
