use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{bleu, wer};
use crate::corpus::{Corpus, Question};
use crate::error::{Error, Result};
use crate::util::mean;

const N_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Wer,
    Bleu,
}

impl Metric {
    fn score(self, reference: &Question, hypothesis: &Question) -> Result<f64> {
        let r = reference.surfaces();
        let h = hypothesis.surfaces();
        match self {
            Metric::Wer => wer(&r, &h),
            Metric::Bleu if h.is_empty() => Ok(0.0),
            Metric::Bleu => bleu(&r, &h, 4),
        }
    }
}

/// How per-question scores are split into sub-distributions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupKey {
    None,
    /// The channel seed of the hypothesis question (`channel_seed`, else
    /// `seed`).
    Seed,
    /// Any other metadata entry of the hypothesis question.
    Meta(String),
}

impl GroupKey {
    fn group_of(&self, q: &Question) -> Option<String> {
        let value = match self {
            GroupKey::None => return None,
            GroupKey::Seed => q
                .metadata
                .get("channel_seed")
                .or_else(|| q.metadata.get("seed")),
            GroupKey::Meta(k) => q.metadata.get(k.as_str()),
        };
        Some(match value {
            Some(Value::String(s)) => s.clone(),
            Some(v) => v.to_string(),
            None => "-".to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub metric: Metric,
    pub group: Option<String>,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
}

impl ScoreDistribution {
    pub fn sample_count(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub overall: ScoreDistribution,
    pub groups: Vec<ScoreDistribution>,
}

/// Pairs the questions of two corpora by id, in the order of `reference`.
pub fn align_pairs<'a>(
    reference: &'a Corpus,
    hypothesis: &'a Corpus,
) -> Result<Vec<(&'a Question, &'a Question)>> {
    if reference.len() != hypothesis.len() {
        return Err(Error::IdMismatch(format!(
            "{} reference vs {} hypothesis questions",
            reference.len(),
            hypothesis.len()
        )));
    }
    let by_id: HashMap<&str, &Question> = hypothesis
        .questions()
        .iter()
        .map(|q| (q.id.as_str(), q))
        .collect();
    reference
        .questions()
        .iter()
        .map(|r| {
            by_id
                .get(r.id.as_str())
                .map(|h| (r, *h))
                .ok_or_else(|| Error::IdMismatch(format!("no hypothesis for question {}", r.id)))
        })
        .collect()
}

/// Per-question metric values binned into a 20-bin histogram over the
/// observed range, overall and per group.
pub fn score_distribution(
    pairs: &[(&Question, &Question)],
    metric: Metric,
    group_key: &GroupKey,
) -> Result<DistributionReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("score distribution pairs"));
    }
    let mut scores = Vec::with_capacity(pairs.len());
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (r, h) in pairs {
        if r.id != h.id {
            return Err(Error::IdMismatch(format!("{} vs {}", r.id, h.id)));
        }
        let s = metric.score(r, h)?;
        scores.push(s);
        if let Some(g) = group_key.group_of(h) {
            grouped.entry(g).or_default().push(s);
        }
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let edges: Vec<f64> = (0..=N_BINS)
        .map(|i| lo + (hi - lo) * i as f64 / N_BINS as f64)
        .collect();

    let build = |group: Option<String>, values: &[f64]| {
        let mut counts = vec![0; N_BINS];
        for &v in values {
            let bin = (((v - lo) / (hi - lo)) * N_BINS as f64).floor() as usize;
            counts[bin.min(N_BINS - 1)] += 1;
        }
        ScoreDistribution {
            metric,
            group,
            edges: edges.clone(),
            counts,
            mean: mean(values),
        }
    };
    Ok(DistributionReport {
        overall: build(None, &scores),
        groups: grouped
            .iter()
            .map(|(g, v)| build(Some(g.clone()), v))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, Source};

    fn q(id: &str, text: &str, seed: u64) -> Question {
        let mut metadata = BTreeMap::new();
        metadata.insert("seed".into(), Value::from(seed));
        Question {
            id: id.into(),
            answer_label: "a".into(),
            sentences: vec![Sentence::from_text(text)],
            source: Source::Clean,
            metadata,
        }
    }

    #[test]
    fn identical_pairs_fill_the_first_bin() {
        let qs = [q("1", "a b c", 0), q("2", "d e", 0)];
        let pairs: Vec<_> = qs.iter().map(|x| (x, x)).collect();
        let wer = score_distribution(&pairs, Metric::Wer, &GroupKey::None).unwrap();
        assert_eq!(wer.overall.counts[0], 2);
        assert_eq!(wer.overall.edges[0], 0.0);
        assert_eq!(wer.overall.mean, 0.0);
        let bleu = score_distribution(&pairs, Metric::Bleu, &GroupKey::None).unwrap();
        assert_eq!(bleu.overall.counts[0], 2);
        assert_eq!(bleu.overall.edges[0], 1.0);
        assert!(bleu.overall.edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn groups_by_seed() {
        let refs = [q("1", "a b c d", 1), q("2", "a b c d", 2), q("3", "a b", 2)];
        let hyps = [q("1", "a b c", 1), q("2", "x b c d", 2), q("3", "a b", 2)];
        let pairs: Vec<_> = refs.iter().zip(hyps.iter()).collect();
        let d = score_distribution(&pairs, Metric::Wer, &GroupKey::Seed).unwrap();
        assert_eq!(d.groups.len(), 2);
        assert_eq!(d.groups[0].group.as_deref(), Some("1"));
        assert_eq!(d.groups[1].sample_count(), 2);
        assert_eq!(d.overall.sample_count(), 3);
        assert!((d.overall.mean - (0.25 + 0.25) / 3.0).abs() < 1e-15);
        // Max value lands in the last bin.
        assert_eq!(d.overall.counts[N_BINS - 1], 2);
    }

    #[test]
    fn mismatched_ids_are_rejected() {
        let a = [q("1", "a", 0)];
        let b = [q("2", "a", 0)];
        let pairs: Vec<_> = a.iter().zip(b.iter()).collect();
        assert!(matches!(
            score_distribution(&pairs, Metric::Wer, &GroupKey::None),
            Err(Error::IdMismatch(_))
        ));
        let ca = Corpus::new(a.to_vec());
        let cb = Corpus::new(b.to_vec());
        assert!(align_pairs(&ca, &cb).is_err());
    }
}
