use std::collections::BTreeMap;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::backward;
use super::forward::{forward, loss, predict_proba, DanInput, Mode};
use super::model::DanModel;
use super::optim::{Adam, PlateauSchedule};
use super::params::{DanParameters, DanShape, Nonlinearity, Variant};
use crate::config::KeyValues;
use crate::corpus::{build_vocabulary, Corpus};
use crate::error::{Error, Result};

/// Evaluation batch size; only affects memory.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub embedding_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub nonlinearity: Nonlinearity,
    pub dropout_rate: f64,
    pub use_batchnorm: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_patience: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub freeze_embeddings: bool,
    /// Divide weighted sums by Σ weights instead of the token count.
    pub normalize_weights: bool,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embedding_dim: 300,
            hidden_dims: vec![1000],
            nonlinearity: Nonlinearity::Tanh,
            dropout_rate: 0.3,
            use_batchnorm: true,
            batch_size: 32,
            learning_rate: 1e-3,
            lr_decay: 0.5,
            lr_patience: 2,
            early_stop_patience: 5,
            max_epochs: 50,
            freeze_embeddings: false,
            normalize_weights: false,
            vocab_size: 100_000,
            seed: 0,
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "embedding_dim",
    "hidden_dims",
    "nonlinearity",
    "dropout_rate",
    "use_batchnorm",
    "batch_size",
    "learning_rate",
    "lr_decay",
    "lr_patience",
    "early_stop_patience",
    "max_epochs",
    "freeze_embeddings",
    "normalize_weights",
    "vocab_size",
    "seed",
];

fn parse_dims(text: &str) -> Result<Vec<usize>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|d| {
            d.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad hidden width '{d}'")))
        })
        .collect()
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive");
        }
        if self.hidden_dims.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.vocab_size == 0 {
            return bad("batch_size, max_epochs and vocab_size must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("learning_rate must be positive and lr_decay in (0, 1]");
        }
        if self.lr_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be positive");
        }
        Ok(())
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(TRAIN_KEYS)?;
        let d = TrainConfig::default();
        let hidden_dims = match kv.get("hidden_dims") {
            Some(text) => parse_dims(text)?,
            None => d.hidden_dims.clone(),
        };
        let config = TrainConfig {
            embedding_dim: kv.get_or("embedding_dim", d.embedding_dim)?,
            hidden_dims,
            nonlinearity: kv.get_or("nonlinearity", d.nonlinearity)?,
            dropout_rate: kv.get_or("dropout_rate", d.dropout_rate)?,
            use_batchnorm: kv.get_or("use_batchnorm", d.use_batchnorm)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            learning_rate: kv.get_or("learning_rate", d.learning_rate)?,
            lr_decay: kv.get_or("lr_decay", d.lr_decay)?,
            lr_patience: kv.get_or("lr_patience", d.lr_patience)?,
            early_stop_patience: kv.get_or("early_stop_patience", d.early_stop_patience)?,
            max_epochs: kv.get_or("max_epochs", d.max_epochs)?,
            freeze_embeddings: kv.get_or("freeze_embeddings", d.freeze_embeddings)?,
            normalize_weights: kv.get_or("normalize_weights", d.normalize_weights)?,
            vocab_size: kv.get_or("vocab_size", d.vocab_size)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("embedding_dim", self.embedding_dim);
        let dims: Vec<String> = self.hidden_dims.iter().map(|h| h.to_string()).collect();
        kv.set("hidden_dims", dims.join(","));
        kv.set("nonlinearity", self.nonlinearity);
        kv.set("dropout_rate", self.dropout_rate);
        kv.set("use_batchnorm", self.use_batchnorm);
        kv.set("batch_size", self.batch_size);
        kv.set("learning_rate", self.learning_rate);
        kv.set("lr_decay", self.lr_decay);
        kv.set("lr_patience", self.lr_patience);
        kv.set("early_stop_patience", self.early_stop_patience);
        kv.set("max_epochs", self.max_epochs);
        kv.set("freeze_embeddings", self.freeze_embeddings);
        kv.set("normalize_weights", self.normalize_weights);
        kv.set("vocab_size", self.vocab_size);
        kv.set("seed", self.seed);
        kv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// `None` when the dev corpus is empty.
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DanModel,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Top-1 accuracy in eval mode. Gold `None` marks a label the network
/// cannot output and always counts as wrong.
pub(crate) fn batch_accuracy(
    params: &DanParameters,
    inputs: &[DanInput],
    gold: &[Option<usize>],
) -> Result<f64> {
    if inputs.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (chunk, gold) in inputs.chunks(EVAL_CHUNK).zip(gold.chunks(EVAL_CHUNK)) {
        for (p, g) in predict_proba(params, chunk)?.iter().zip(gold) {
            if g.is_some() && Some(argmax(p)) == *g {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / inputs.len() as f64)
}

/// First index of the maximum; labels are sorted, so ties resolve
/// lexicographically.
pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch training with Adam, plateau learning-rate decay and early
/// stopping on dev accuracy. Returns the best-dev-epoch parameters.
pub fn train(
    train: &Corpus,
    dev: &Corpus,
    config: &TrainConfig,
    variant: Variant,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let vocab = build_vocabulary(train, config.vocab_size)?;
    let labels: Vec<String> = train.answer_set().iter().cloned().collect();
    let label_index: BTreeMap<String, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), i))
        .collect();

    let shape = DanShape {
        vocab_size: vocab.len(),
        embedding_dim: config.embedding_dim,
        hidden_dims: config.hidden_dims.clone(),
        n_classes: labels.len(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = DanParameters::init(
        &shape,
        variant,
        config.nonlinearity,
        config.use_batchnorm,
        &mut rng,
    )?;
    params.normalize_weights = config.normalize_weights;

    let mut model = DanModel {
        params,
        vocab,
        labels,
        config: config.clone(),
    };
    let train_inputs: Vec<DanInput> = train.questions().iter().map(|q| model.encode(q)).collect();
    let train_gold: Vec<usize> = train
        .questions()
        .iter()
        .map(|q| label_index[q.answer_label.as_str()])
        .collect();
    let train_gold_opt: Vec<Option<usize>> = train_gold.iter().map(|&g| Some(g)).collect();
    let dev_inputs: Vec<DanInput> = dev.questions().iter().map(|q| model.encode(q)).collect();
    let dev_gold: Vec<Option<usize>> = dev
        .questions()
        .iter()
        .map(|q| label_index.get(q.answer_label.as_str()).copied())
        .collect();
    let unseen = dev_gold.iter().filter(|g| g.is_none()).count();
    if unseen > 0 {
        warn!("{unseen} dev questions have answers absent from train; counted as wrong");
    }
    if dev.is_empty() {
        warn!("empty dev corpus; model selection falls back to train accuracy");
    }

    let mut adam = Adam::new(config.learning_rate);
    let mut schedule = PlateauSchedule::new(config.lr_decay, config.lr_patience);
    let mut order: Vec<usize> = (0..train_inputs.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, DanParameters)> = None;
    let mut stale = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch_idx in order.chunks(config.batch_size) {
            let batch: Vec<DanInput> = batch_idx.iter().map(|&i| train_inputs[i].clone()).collect();
            let gold: Vec<usize> = batch_idx.iter().map(|&i| train_gold[i]).collect();
            let mode = Mode::Train {
                dropout_rate: config.dropout_rate,
                mask_seed: rng.gen(),
            };
            let (probs, trace) = forward(&model.params, &batch, mode)?;
            loss_sum += loss(&probs, &gold)? * batch.len() as f64;
            let grads = backward(&model.params, &trace, &gold)?;
            adam.step(&mut model.params, &grads, config.freeze_embeddings);
            // Single-example batches carry no variance information.
            if batch.len() > 1 {
                for (bn, (mean, var)) in model
                    .params
                    .batchnorm
                    .iter_mut()
                    .zip(trace.batch_statistics())
                {
                    bn.update_running(mean, var);
                }
            }
        }
        let train_accuracy = batch_accuracy(&model.params, &train_inputs, &train_gold_opt)?;
        let dev_accuracy = if dev.is_empty() {
            None
        } else {
            Some(batch_accuracy(&model.params, &dev_inputs, &dev_gold)?)
        };
        let record = EpochRecord {
            epoch,
            learning_rate: adam.lr,
            train_loss: loss_sum / train_inputs.len() as f64,
            train_accuracy,
            dev_accuracy,
        };
        debug!(
            "epoch {epoch}: loss {:.4} train {:.4} dev {:?} lr {:.2e}",
            record.train_loss, train_accuracy, dev_accuracy, adam.lr
        );
        history.push(record);

        let monitored = dev_accuracy.unwrap_or(train_accuracy);
        if best.as_ref().is_none_or(|(b, _, _)| monitored > *b) {
            best = Some((monitored, epoch, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        adam.lr = schedule.observe(monitored, adam.lr);
        if stale >= config.early_stop_patience {
            stopped_early = true;
            break;
        }
    }

    let (best_acc, best_epoch, best_params) = best.expect("at least one epoch runs");
    info!(
        "{} trained {} epochs, best epoch {best_epoch} ({best_acc:.4})",
        variant,
        history.len()
    );
    model.params = best_params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        stopped_early,
    })
}
