use std::path::Path;

use serde::{Deserialize, Serialize};

use super::forward::{predict_proba, DanInput};
use super::params::{DanParameters, DanShape, Variant};
use super::train::{argmax, TrainConfig};
use crate::corpus::{Position, Question, Vocabulary};
use crate::error::{Error, Result};
use crate::util::write_atomic;

const CHECKPOINT_FORMAT: &str = "noisyqa-dan";
const CHECKPOINT_VERSION: u32 = 1;

/// Trained network together with everything needed to apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct DanModel {
    pub params: DanParameters,
    pub vocab: Vocabulary,
    /// Answer labels in class-index order (sorted).
    pub labels: Vec<String>,
    pub config: TrainConfig,
}

impl DanModel {
    pub fn variant(&self) -> Variant {
        self.params.variant
    }

    /// Token ids and confidences; unknown words map to the `<unk>` row.
    pub fn encode(&self, question: &Question) -> DanInput {
        let (ids, conf) = question
            .tokens()
            .map(|t| (self.vocab.id_or_unk(&t.surface), t.confidence))
            .unzip();
        DanInput::new(ids, conf)
    }

    /// Ranked (answer, probability) pairs, best first, ties lexicographic.
    pub fn predict(
        &self,
        question: &Question,
        position: Position,
        k: usize,
    ) -> Result<Vec<(String, f64)>> {
        let input = self.encode(&position.view(question));
        let probs = predict_proba(&self.params, &[input])?.remove(0);
        let mut ranked: Vec<usize> = (0..probs.len()).collect();
        // Stable sort keeps label order among equal probabilities.
        ranked.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
        Ok(ranked
            .into_iter()
            .take(k)
            .map(|i| (self.labels[i].clone(), probs[i]))
            .collect())
    }

    /// Top-1 labels for many questions at once.
    pub fn predict_top1(&self, questions: &[Question], position: Position) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(questions.len());
        for chunk in questions.chunks(256) {
            let inputs: Vec<DanInput> = chunk
                .iter()
                .map(|q| self.encode(&position.view(q)))
                .collect();
            for p in predict_proba(&self.params, &inputs)? {
                out.push(self.labels[argmax(&p)].clone());
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let checkpoint = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            format_version: CHECKPOINT_VERSION,
            variant: self.params.variant,
            shape: self.params.shape(),
            vocab_fingerprint: self.vocab.fingerprint(),
            train_config: self.config.clone(),
            labels: self.labels.clone(),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
        };
        Ok(serde_json::to_string(&checkpoint)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.format != CHECKPOINT_FORMAT || c.format_version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "not a model checkpoint (format '{}' v{})",
                c.format, c.format_version
            )));
        }
        let found = c.vocab.fingerprint();
        if found != c.vocab_fingerprint {
            return Err(Error::Fingerprint {
                expected: c.vocab_fingerprint,
                found,
            });
        }
        c.params.validate()?;
        if c.params.variant != c.variant || c.params.shape() != c.shape {
            return Err(Error::Validation(
                "checkpoint header disagrees with parameters".into(),
            ));
        }
        if c.shape.vocab_size != c.vocab.len() || c.shape.n_classes != c.labels.len() {
            return Err(Error::Shape(
                "vocabulary or labels do not match network shape".into(),
            ));
        }
        Ok(DanModel {
            params: c.params,
            vocab: c.vocab,
            labels: c.labels,
            config: c.train_config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    format_version: u32,
    variant: Variant,
    shape: DanShape,
    vocab_fingerprint: String,
    train_config: TrainConfig,
    labels: Vec<String>,
    vocab: Vocabulary,
    params: DanParameters,
}
