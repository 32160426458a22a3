//! Experiment orchestration: methods × conditions × positions accuracy.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use crate::channel::{corrupt_corpus_with, decoder_for, ChannelConfig, OovBehavior};
use crate::corpus::{split_corpus, Corpus, Position, Question};
use crate::dan::{self, DanModel, TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::index::{build_index, query, InvertedIndex, DEFAULT_B, DEFAULT_K1};

/// Condition fingerprint of uncorrupted text.
pub const CLEAN_CONDITION: &str = "clean";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Ir,
    DanPlain,
    /// Confidence-aware network on the `<unk>`-emitting transcripts.
    DanConf,
    /// Plain network on forced-decoded transcripts.
    DanFd,
    /// Confidence-aware network on forced-decoded transcripts.
    DanFdConf,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [
        MethodKind::Ir,
        MethodKind::DanPlain,
        MethodKind::DanConf,
        MethodKind::DanFd,
        MethodKind::DanFdConf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Ir => "ir",
            MethodKind::DanPlain => "dan_plain",
            MethodKind::DanConf => "dan_conf",
            MethodKind::DanFd => "dan_fd",
            MethodKind::DanFdConf => "dan_fd_conf",
        }
    }

    pub fn uses_forced_decoding(self) -> bool {
        matches!(self, MethodKind::DanFd | MethodKind::DanFdConf)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Clean,
    Corrupted,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Clean => "clean",
            Condition::Corrupted => "corrupted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    /// Network variant behind the confidence-aware kinds.
    pub conf_variant: Variant,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        MethodSpec {
            kind,
            conf_variant: Variant::ConfLearned,
        }
    }

    pub fn variant(&self) -> Option<Variant> {
        match self.kind {
            MethodKind::Ir => None,
            MethodKind::DanPlain | MethodKind::DanFd => Some(Variant::Plain),
            MethodKind::DanConf | MethodKind::DanFdConf => Some(self.conf_variant),
        }
    }
}

/// The condition a corpus was produced under: the channel fingerprint
/// shared by all questions, or [`CLEAN_CONDITION`].
pub fn condition_fingerprint(corpus: &Corpus) -> Result<String> {
    let mut found: Option<String> = None;
    for q in corpus.questions() {
        let fp = q
            .metadata
            .get("channel")
            .and_then(|v| v.as_str())
            .unwrap_or(CLEAN_CONDITION)
            .to_string();
        match &found {
            None => found = Some(fp),
            Some(f) if *f != fp => {
                return Err(Error::Validation(format!(
                    "corpus mixes conditions '{f}' and '{fp}'"
                )))
            }
            _ => {}
        }
    }
    found.ok_or(Error::Empty("corpus"))
}

/// A built or trained system together with the condition it was fit on.
#[derive(Debug, Clone)]
pub enum TrainedMethod {
    Ir {
        index: InvertedIndex,
        condition: String,
    },
    Dan {
        model: DanModel,
        condition: String,
    },
    /// Fixed answers, for checking the evaluator itself.
    Lookup {
        answers: BTreeMap<String, String>,
        condition: String,
    },
}

impl TrainedMethod {
    pub fn condition(&self) -> &str {
        match self {
            TrainedMethod::Ir { condition, .. }
            | TrainedMethod::Dan { condition, .. }
            | TrainedMethod::Lookup { condition, .. } => condition,
        }
    }

    pub fn predict_top1(&self, questions: &[Question], position: Position) -> Result<Vec<String>> {
        match self {
            TrainedMethod::Ir { index, .. } => questions
                .iter()
                .map(|q| {
                    let ranked = query(index, &position.view(q), 1)?;
                    Ok(ranked
                        .into_iter()
                        .next()
                        .map(|(l, _)| l)
                        .unwrap_or_default())
                })
                .collect(),
            TrainedMethod::Dan { model, .. } => model.predict_top1(questions, position),
            TrainedMethod::Lookup { answers, .. } => Ok(questions
                .iter()
                .map(|q| answers.get(&q.id).cloned().unwrap_or_default())
                .collect()),
        }
    }
}

/// Exact (correct, total) top-1 count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Top-1 tally of `method` on `test`. With `allow_mismatch` unset the
/// method must have been fit on the test corpus's condition.
pub fn tally(
    method: &TrainedMethod,
    test: &Corpus,
    position: Position,
    allow_mismatch: bool,
) -> Result<Tally> {
    let found = condition_fingerprint(test)?;
    if !allow_mismatch && found != method.condition() {
        return Err(Error::Fingerprint {
            expected: method.condition().to_string(),
            found,
        });
    }
    let predictions = method.predict_top1(test.questions(), position)?;
    let correct = predictions
        .iter()
        .zip(test.questions())
        .filter(|(p, q)| **p == q.answer_label)
        .count();
    Ok(Tally {
        correct,
        total: test.len(),
    })
}

pub fn accuracy(method: &TrainedMethod, test: &Corpus, position: Position) -> Result<f64> {
    Ok(tally(method, test, position, false)?.accuracy())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTally {
    pub seed: u64,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: MethodKind,
    pub condition: Condition,
    pub position: Position,
    pub per_seed: Vec<SeedTally>,
}

impl ResultRow {
    pub fn mean_accuracy(&self) -> f64 {
        if self.per_seed.is_empty() {
            return 0.0;
        }
        self.per_seed
            .iter()
            .map(|s| {
                Tally {
                    correct: s.correct,
                    total: s.total,
                }
                .accuracy()
            })
            .sum::<f64>()
            / self.per_seed.len() as f64
    }
}

/// A question on which the plain and confidence networks disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub seed: u64,
    pub question_id: String,
    pub gold: String,
    pub plain: String,
    pub confidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub seeds: Vec<u64>,
    pub channel_fingerprint: String,
    /// Whether methods were trained on clean text and tested on transcripts.
    pub mismatched: bool,
    pub unanswerable_fraction: f64,
    #[serde(default)]
    pub divergences: Vec<Divergence>,
}

impl ExperimentResult {
    pub fn row(
        &self,
        method: MethodKind,
        condition: Condition,
        position: Position,
    ) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.condition == condition && r.position == position)
    }

    pub fn mean(
        &self,
        method: MethodKind,
        condition: Condition,
        position: Position,
    ) -> Option<f64> {
        self.row(method, condition, position)
            .map(ResultRow::mean_accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone)]
pub struct MatrixPlan {
    pub channel: ChannelConfig,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    pub split_ratios: (f64, f64, f64),
    pub split_seed: u64,
    pub train_config: TrainConfig,
    pub k1: f64,
    pub b: f64,
    pub mismatched: bool,
    /// Divergent questions kept per seed.
    pub max_divergences: usize,
}

impl MatrixPlan {
    pub fn new(channel: ChannelConfig, train_config: TrainConfig) -> Self {
        MatrixPlan {
            channel,
            methods: MethodKind::ALL.into_iter().map(MethodSpec::new).collect(),
            seeds: vec![1, 2, 3],
            split_ratios: (0.8, 0.1, 0.1),
            split_seed: 0,
            train_config,
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            mismatched: false,
            max_divergences: 5,
        }
    }
}

struct ConditionData {
    train: Corpus,
    dev: Corpus,
    test: Corpus,
    fingerprint: String,
}

fn fit(
    spec: &MethodSpec,
    data: &ConditionData,
    plan: &MatrixPlan,
    seed: u64,
) -> Result<TrainedMethod> {
    let condition = data.fingerprint.clone();
    match spec.variant() {
        None => Ok(TrainedMethod::Ir {
            index: build_index(&data.train, plan.k1, plan.b)?,
            condition,
        }),
        Some(variant) => {
            let config = TrainConfig {
                seed,
                ..plan.train_config.clone()
            };
            let outcome = dan::train(&data.train, &data.dev, &config, variant)?;
            Ok(TrainedMethod::Dan {
                model: outcome.model,
                condition,
            })
        }
    }
}

/// Builds or trains every method per condition and seed and scores both
/// positions. The corpus is corrupted once per decoding mode and split
/// once, so all methods see the same questions.
pub fn run_matrix(clean: &Corpus, plan: &MatrixPlan) -> Result<ExperimentResult> {
    if plan.seeds.is_empty() || plan.methods.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one seed and method".into(),
        ));
    }
    let decoder = decoder_for(clean, &plan.channel)?;
    let unk_config = ChannelConfig {
        oov_behavior: OovBehavior::EmitUnk,
        ..plan.channel.clone()
    };
    let fd_config = ChannelConfig {
        oov_behavior: OovBehavior::ForcedDecode,
        ..plan.channel.clone()
    };

    let split_of = |corpus: &Corpus| -> Result<ConditionData> {
        let s = split_corpus(corpus, plan.split_ratios, plan.split_seed)?;
        Ok(ConditionData {
            fingerprint: condition_fingerprint(&s.train)?,
            train: s.train,
            dev: s.dev,
            test: s.test,
        })
    };
    let clean_data = split_of(clean)?;
    let unanswerable_fraction =
        split_corpus(clean, plan.split_ratios, plan.split_seed)?.unanswerable_fraction;
    let unk_data = split_of(&corrupt_corpus_with(clean, &unk_config, &decoder)?)?;
    let needs_fd = plan.methods.iter().any(|m| m.kind.uses_forced_decoding());
    let fd_data = if needs_fd {
        Some(split_of(&corrupt_corpus_with(
            clean, &fd_config, &decoder,
        )?)?)
    } else {
        None
    };

    let mut rows: BTreeMap<(MethodKind, Condition, Position), Vec<SeedTally>> = BTreeMap::new();
    let mut divergences = Vec::new();
    for &seed in &plan.seeds {
        let mut corrupted_dans: BTreeMap<MethodKind, TrainedMethod> = BTreeMap::new();
        for spec in &plan.methods {
            for condition in [Condition::Clean, Condition::Corrupted] {
                // Forced decoding only changes transcripts.
                if condition == Condition::Clean && spec.kind.uses_forced_decoding() {
                    continue;
                }
                let test_data = match condition {
                    Condition::Clean => &clean_data,
                    Condition::Corrupted if spec.kind.uses_forced_decoding() => {
                        fd_data.as_ref().expect("forced-decoded corpus prepared")
                    }
                    Condition::Corrupted => &unk_data,
                };
                let train_data = if plan.mismatched {
                    &clean_data
                } else {
                    test_data
                };
                let method = fit(spec, train_data, plan, seed)?;
                for position in Position::BOTH {
                    let t = tally(&method, &test_data.test, position, plan.mismatched)?;
                    info!(
                        "seed {seed} {} {condition} {position}: {}/{}",
                        spec.kind, t.correct, t.total
                    );
                    rows.entry((spec.kind, condition, position))
                        .or_default()
                        .push(SeedTally {
                            seed,
                            correct: t.correct,
                            total: t.total,
                        });
                }
                if condition == Condition::Corrupted {
                    corrupted_dans.insert(spec.kind, method);
                }
            }
        }
        if let (Some(plain), Some(conf)) = (
            corrupted_dans.get(&MethodKind::DanPlain),
            corrupted_dans.get(&MethodKind::DanConf),
        ) {
            let questions = unk_data.test.questions();
            let a = plain.predict_top1(questions, Position::End)?;
            let b = conf.predict_top1(questions, Position::End)?;
            for ((q, p), c) in questions.iter().zip(a).zip(b) {
                if p != c && divergences.len() < plan.max_divergences * plan.seeds.len() {
                    info!(
                        "divergence on {}: gold {}, plain {p}, confidence {c}",
                        q.id, q.answer_label
                    );
                    divergences.push(Divergence {
                        seed,
                        question_id: q.id.clone(),
                        gold: q.answer_label.clone(),
                        plain: p,
                        confidence: c,
                    });
                }
            }
        }
    }

    Ok(ExperimentResult {
        rows: rows
            .into_iter()
            .map(|((method, condition, position), per_seed)| ResultRow {
                method,
                condition,
                position,
                per_seed,
            })
            .collect(),
        seeds: plan.seeds.clone(),
        channel_fingerprint: plan.channel.fingerprint(),
        mismatched: plan.mismatched,
        unanswerable_fraction,
        divergences,
    })
}

fn cell(row: Option<&ResultRow>) -> String {
    match row {
        None => "-".to_string(),
        Some(r) => {
            let seeds: Vec<String> = r
                .per_seed
                .iter()
                .map(|s| {
                    format!(
                        "{:.4}",
                        Tally {
                            correct: s.correct,
                            total: s.total
                        }
                        .accuracy()
                    )
                })
                .collect();
            format!("{:.4} ({})", r.mean_accuracy(), seeds.join("/"))
        }
    }
}

/// Plain-text table: one line per (method, condition), columns method,
/// condition, start, end; each cell is the seed mean followed by the
/// per-seed accuracies.
pub fn render_table(result: &ExperimentResult) -> String {
    let mut pairs: Vec<(MethodKind, Condition)> = result
        .rows
        .iter()
        .map(|r| (r.method, r.condition))
        .collect();
    pairs.sort_by_key(|&(m, c)| (c, m));
    pairs.dedup();
    let lines: Vec<[String; 4]> = pairs
        .iter()
        .map(|&(m, c)| {
            [
                m.to_string(),
                c.to_string(),
                cell(result.row(m, c, Position::Start)),
                cell(result.row(m, c, Position::End)),
            ]
        })
        .collect();
    let header = ["method", "condition", "start", "end"].map(String::from);
    let mut widths = header.clone().map(|h| h.len());
    for l in &lines {
        for (w, c) in widths.iter_mut().zip(l) {
            *w = (*w).max(c.len());
        }
    }
    let fmt_line = |l: &[String; 4]| {
        l.iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = fmt_line(&header);
    out.push('\n');
    for l in &lines {
        out.push_str(&fmt_line(l));
        out.push('\n');
    }
    out
}

/// Desk-scale ordering checks that `evaluate --assert` can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// Plain network: clean end accuracy above corrupted end accuracy.
    CleanOverCorrupted,
    /// Confidence network at least as accurate as plain on corrupted ends.
    ConfOverPlain,
    /// Forced-decoded transcripts at least as good as `<unk>` ones.
    ForcedOverUnk,
    /// Retrieval end accuracy at least its start accuracy.
    IrEndOverStart,
    /// Plain network end accuracy at least its start accuracy.
    DanEndOverStart,
}

impl Ordering {
    pub const ALL: [Ordering; 5] = [
        Ordering::CleanOverCorrupted,
        Ordering::ConfOverPlain,
        Ordering::ForcedOverUnk,
        Ordering::IrEndOverStart,
        Ordering::DanEndOverStart,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ordering::CleanOverCorrupted => "clean_gt_corrupted",
            Ordering::ConfOverPlain => "conf_ge_plain",
            Ordering::ForcedOverUnk => "fd_ge_unk",
            Ordering::IrEndOverStart => "ir_end_ge_start",
            Ordering::DanEndOverStart => "dan_end_ge_start",
        }
    }

    /// (holds, left mean, right mean); `None` if a needed row is missing.
    pub fn check(self, r: &ExperimentResult) -> Option<(bool, f64, f64)> {
        use Condition::*;
        use MethodKind::*;
        use Position::*;
        let (l, rt, strict) = match self {
            Ordering::CleanOverCorrupted => (
                r.mean(DanPlain, Clean, End)?,
                r.mean(DanPlain, Corrupted, End)?,
                true,
            ),
            Ordering::ConfOverPlain => (
                r.mean(DanConf, Corrupted, End)?,
                r.mean(DanPlain, Corrupted, End)?,
                false,
            ),
            Ordering::ForcedOverUnk => (
                r.mean(DanFd, Corrupted, End)?,
                r.mean(DanPlain, Corrupted, End)?,
                false,
            ),
            Ordering::IrEndOverStart => (
                r.mean(Ir, Corrupted, End)?,
                r.mean(Ir, Corrupted, Start)?,
                false,
            ),
            Ordering::DanEndOverStart => (
                r.mean(DanPlain, Corrupted, End)?,
                r.mean(DanPlain, Corrupted, Start)?,
                false,
            ),
        };
        Some((if strict { l > rt } else { l >= rt }, l, rt))
    }
}

impl FromStr for Ordering {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ordering::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown ordering '{s}'"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, Source};

    fn corpus(items: &[(&str, &str, &str)]) -> Corpus {
        Corpus::new(
            items
                .iter()
                .map(|(id, label, text)| Question {
                    id: id.to_string(),
                    answer_label: label.to_string(),
                    sentences: text.split('|').map(Sentence::from_text).collect(),
                    source: Source::Clean,
                    metadata: Default::default(),
                })
                .collect(),
        )
    }

    fn lookup(pairs: &[(&str, &str)]) -> TrainedMethod {
        TrainedMethod::Lookup {
            answers: pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            condition: CLEAN_CONDITION.into(),
        }
    }

    fn five() -> Corpus {
        corpus(&[
            ("a", "x", "w"),
            ("b", "y", "w"),
            ("c", "x", "w"),
            ("d", "z", "w"),
            ("e", "y", "w"),
        ])
    }

    #[test]
    fn oracle_and_constant_methods() {
        let c = five();
        let gold: Vec<(&str, &str)> = c
            .questions()
            .iter()
            .map(|q| (q.id.as_str(), q.answer_label.as_str()))
            .collect();
        assert_eq!(accuracy(&lookup(&gold), &c, Position::End).unwrap(), 1.0);
        let wrong = lookup(&[("a", "q"), ("b", "q"), ("c", "q"), ("d", "q"), ("e", "q")]);
        assert_eq!(accuracy(&wrong, &c, Position::End).unwrap(), 0.0);
    }

    #[test]
    fn five_question_hand_count() {
        // Right on a, d and e: 3 of 5.
        let m = lookup(&[("a", "x"), ("b", "x"), ("c", "y"), ("d", "z"), ("e", "y")]);
        let t = tally(&m, &five(), Position::Start, false).unwrap();
        assert_eq!((t.correct, t.total), (3, 5));
        assert_eq!(t.accuracy(), 0.6);
    }

    #[test]
    fn condition_mismatch_is_rejected() {
        let m = TrainedMethod::Lookup {
            answers: BTreeMap::new(),
            condition: "0123456789abcdef".into(),
        };
        assert!(matches!(
            accuracy(&m, &five(), Position::End),
            Err(Error::Fingerprint { .. })
        ));
        assert!(tally(&m, &five(), Position::End, true).is_ok());
    }

    #[test]
    fn single_sentence_start_equals_end() {
        let train = corpus(&[
            ("t1", "dumas", "musketeers count monte cristo"),
            ("t2", "newton", "gravity force apple"),
        ]);
        let test = corpus(&[("s1", "dumas", "count"), ("s2", "newton", "apple gravity")]);
        let ir = TrainedMethod::Ir {
            index: build_index(&train, DEFAULT_K1, DEFAULT_B).unwrap(),
            condition: CLEAN_CONDITION.into(),
        };
        assert_eq!(
            ir.predict_top1(test.questions(), Position::Start).unwrap(),
            ir.predict_top1(test.questions(), Position::End).unwrap()
        );
    }

    fn result() -> ExperimentResult {
        ExperimentResult {
            rows: vec![ResultRow {
                method: MethodKind::Ir,
                condition: Condition::Clean,
                position: Position::End,
                per_seed: vec![
                    SeedTally {
                        seed: 1,
                        correct: 1,
                        total: 4,
                    },
                    SeedTally {
                        seed: 2,
                        correct: 3,
                        total: 4,
                    },
                    SeedTally {
                        seed: 3,
                        correct: 2,
                        total: 4,
                    },
                ],
            }],
            seeds: vec![1, 2, 3],
            channel_fingerprint: "abc".into(),
            mismatched: false,
            unanswerable_fraction: 0.0,
            divergences: vec![],
        }
    }

    #[test]
    fn mean_over_seeds_and_rendering() {
        let r = result();
        assert_eq!(r.rows[0].mean_accuracy(), 0.5);
        let table = render_table(&r);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("method"));
        assert!(lines[1].contains("0.5000 (0.2500/0.7500/0.5000)"));
        assert!(lines[1].starts_with("ir"));
    }

    #[test]
    fn json_round_trip() {
        let r = result();
        assert_eq!(ExperimentResult::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn names_round_trip() {
        for m in MethodKind::ALL {
            assert_eq!(m.name().parse::<MethodKind>().unwrap(), m);
        }
        for o in Ordering::ALL {
            assert_eq!(o.name().parse::<Ordering>().unwrap(), o);
        }
    }
}
