use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{BatchNorm, DanParameters, Variant};
use super::tensor::{axpy, softmax, Matrix};
use crate::error::{Error, Result};

/// One question as the network sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct DanInput {
    pub token_ids: Vec<usize>,
    pub confidences: Vec<f64>,
}

impl DanInput {
    pub fn new(token_ids: Vec<usize>, confidences: Vec<f64>) -> Self {
        DanInput {
            token_ids,
            confidences,
        }
    }

    /// All-confident input, as for clean text.
    pub fn clean(token_ids: Vec<usize>) -> Self {
        let n = token_ids.len();
        DanInput::new(token_ids, vec![1.0; n])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Batch statistics and seeded dropout masks.
    Train { dropout_rate: f64, mask_seed: u64 },
    /// Running statistics, no dropout.
    Eval,
}

impl Mode {
    /// Train mode with dropout off, as used for gradient checks.
    pub fn deterministic_train() -> Self {
        Mode::Train {
            dropout_rate: 0.0,
            mask_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ExampleTrace {
    pub token_ids: Vec<usize>,
    pub confidences: Vec<f64>,
    pub weights: Vec<f64>,
    pub denom: f64,
    /// Whether `denom` is Σ weights rather than the token count.
    pub normalized: bool,
    pub encoded: Vec<f64>,
    pub mean_confidence: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerTrace {
    /// Layer input after dropout, one row per example.
    pub input: Vec<Vec<f64>>,
    /// Standardized pre-activations (batchnorm only).
    pub normalized: Option<Vec<Vec<f64>>>,
    pub inv_std: Option<Vec<f64>>,
    /// Activations before dropout.
    pub activation: Vec<Vec<f64>>,
    pub mask: Option<Vec<Vec<f64>>>,
}

/// Intermediates of one forward pass, sufficient for exact gradients.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub(crate) version: u64,
    pub(crate) train: bool,
    pub(crate) examples: Vec<ExampleTrace>,
    pub(crate) input_mask: Option<Vec<Vec<f64>>>,
    pub(crate) layers: Vec<LayerTrace>,
    pub(crate) final_input: Vec<Vec<f64>>,
    pub(crate) batch_means: Vec<Vec<f64>>,
    pub(crate) batch_vars: Vec<Vec<f64>>,
    pub probabilities: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.examples.len()
    }

    /// Per-layer (mean, biased variance) of the pre-activations over the
    /// batch; empty without batchnorm.
    pub fn batch_statistics(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.batch_means
            .iter()
            .zip(&self.batch_vars)
            .map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    /// Per-token encoder weights of example `i` (1, c or f(c)).
    pub fn token_weights(&self, i: usize) -> &[f64] {
        &self.examples[i].weights
    }
}

fn check_tokens(embeddings: &Matrix, token_ids: &[usize]) -> Result<()> {
    if token_ids.is_empty() {
        return Err(Error::Empty("token list"));
    }
    if let Some(&bad) = token_ids.iter().find(|&&t| t >= embeddings.rows) {
        return Err(Error::Shape(format!(
            "token id {bad} outside vocabulary of {}",
            embeddings.rows
        )));
    }
    Ok(())
}

fn weighted_mean(
    embeddings: &Matrix,
    token_ids: &[usize],
    weights: &[f64],
    denom: f64,
) -> Vec<f64> {
    let mut r = vec![0.0; embeddings.cols];
    for (&t, &w) in token_ids.iter().zip(weights) {
        axpy(w / denom, embeddings.row(t), &mut r);
    }
    r
}

/// r = Σ E[w_i] / N
pub fn encode_nbow(embeddings: &Matrix, token_ids: &[usize]) -> Result<Vec<f64>> {
    check_tokens(embeddings, token_ids)?;
    let weights = vec![1.0; token_ids.len()];
    Ok(weighted_mean(
        embeddings,
        token_ids,
        &weights,
        token_ids.len() as f64,
    ))
}

/// r* = Σ E[w_i] · c_i / N
pub fn encode_confidence_weighted(
    embeddings: &Matrix,
    token_ids: &[usize],
    confidences: &[f64],
) -> Result<Vec<f64>> {
    check_tokens(embeddings, token_ids)?;
    check_confidences(token_ids, confidences)?;
    Ok(weighted_mean(
        embeddings,
        token_ids,
        confidences,
        token_ids.len() as f64,
    ))
}

/// r** = Σ E[w_i] · f(c_i) / N with f(c) = weight · c + bias.
pub fn encode_learned_confidence(
    embeddings: &Matrix,
    token_ids: &[usize],
    confidences: &[f64],
    recal: super::ConfRecal,
) -> Result<Vec<f64>> {
    check_tokens(embeddings, token_ids)?;
    check_confidences(token_ids, confidences)?;
    let weights: Vec<f64> = confidences
        .iter()
        .map(|&c| super::learned_confidence(c, recal.weight, recal.bias))
        .collect();
    Ok(weighted_mean(
        embeddings,
        token_ids,
        &weights,
        token_ids.len() as f64,
    ))
}

/// Mean word confidence of a question, the `conf_softmax` feature.
pub fn mean_confidence(confidences: &[f64]) -> f64 {
    crate::util::mean(confidences)
}

fn check_confidences(token_ids: &[usize], confidences: &[f64]) -> Result<()> {
    if token_ids.len() != confidences.len() {
        return Err(Error::Shape(format!(
            "{} tokens but {} confidences",
            token_ids.len(),
            confidences.len()
        )));
    }
    Ok(())
}

/// Encoder weights, denominator, and whether the denominator is Σ weights.
fn encoder_weights(params: &DanParameters, input: &DanInput) -> (Vec<f64>, f64, bool) {
    let n = input.token_ids.len() as f64;
    let weights: Vec<f64> = match params.variant {
        Variant::Plain | Variant::ConfSoftmax => vec![1.0; input.token_ids.len()],
        Variant::ConfWeighted => input.confidences.clone(),
        Variant::ConfLearned => input
            .confidences
            .iter()
            .map(|&c| {
                super::learned_confidence(c, params.conf_recal.weight, params.conf_recal.bias)
            })
            .collect(),
    };
    let total: f64 = weights.iter().sum();
    if params.normalize_weights && total.abs() > 1e-12 {
        (weights, total, true)
    } else {
        (weights, n, false)
    }
}

fn dropout_mask(rng: &mut ChaCha8Rng, width: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..width)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

fn apply_mask(rows: &mut [Vec<f64>], masks: &[Vec<f64>]) {
    for (row, mask) in rows.iter_mut().zip(masks) {
        for (x, m) in row.iter_mut().zip(mask) {
            *x *= m;
        }
    }
}

/// Runs the network on a batch, returning per-example answer
/// probabilities and the trace needed by [`super::backward`].
pub fn forward(
    params: &DanParameters,
    batch: &[DanInput],
    mode: Mode,
) -> Result<(Vec<Vec<f64>>, ForwardTrace)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let (train, dropout_rate, mask_seed) = match mode {
        Mode::Train {
            dropout_rate,
            mask_seed,
        } => (true, dropout_rate, mask_seed),
        Mode::Eval => (false, 0.0, 0),
    };
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {dropout_rate} not in [0, 1)"
        )));
    }
    let mut mask_rng = ChaCha8Rng::seed_from_u64(mask_seed);
    let use_dropout = train && dropout_rate > 0.0;

    let mut examples = Vec::with_capacity(batch.len());
    for input in batch {
        check_tokens(&params.embeddings, &input.token_ids)?;
        check_confidences(&input.token_ids, &input.confidences)?;
        let (weights, denom, normalized) = encoder_weights(params, input);
        let encoded = weighted_mean(&params.embeddings, &input.token_ids, &weights, denom);
        examples.push(ExampleTrace {
            token_ids: input.token_ids.clone(),
            confidences: input.confidences.clone(),
            weights,
            denom,
            normalized,
            encoded,
            mean_confidence: mean_confidence(&input.confidences),
        });
    }

    let mut current: Vec<Vec<f64>> = examples.iter().map(|e| e.encoded.clone()).collect();
    let input_mask = use_dropout.then(|| {
        let masks: Vec<Vec<f64>> = current
            .iter()
            .map(|row| dropout_mask(&mut mask_rng, row.len(), dropout_rate))
            .collect();
        apply_mask(&mut current, &masks);
        masks
    });

    let bsz = batch.len() as f64;
    let mut layers = Vec::with_capacity(params.hidden.len());
    let mut batch_means = Vec::new();
    let mut batch_vars = Vec::new();
    for (li, layer) in params.hidden.iter().enumerate() {
        let mut pre: Vec<Vec<f64>> = current
            .iter()
            .map(|x| {
                let mut z = layer.weight.matvec(x);
                axpy(1.0, &layer.bias, &mut z);
                z
            })
            .collect();
        let width = layer.outputs();
        let (normalized, inv_std) = if let Some(bn) = params.batchnorm.get(li) {
            let (mean, var) = if train {
                let mut mean = vec![0.0; width];
                for z in &pre {
                    axpy(1.0 / bsz, z, &mut mean);
                }
                let mut var = vec![0.0; width];
                for z in &pre {
                    for j in 0..width {
                        var[j] += (z[j] - mean[j]).powi(2) / bsz;
                    }
                }
                batch_means.push(mean.clone());
                batch_vars.push(var.clone());
                (mean, var)
            } else {
                (bn.running_mean.clone(), bn.running_var.clone())
            };
            let inv_std: Vec<f64> = var
                .iter()
                .map(|v| 1.0 / (v + BatchNorm::EPS).sqrt())
                .collect();
            let mut xhat = Vec::with_capacity(pre.len());
            for z in pre.iter_mut() {
                let row: Vec<f64> = (0..width).map(|j| (z[j] - mean[j]) * inv_std[j]).collect();
                for j in 0..width {
                    z[j] = bn.scale[j] * row[j] + bn.shift[j];
                }
                xhat.push(row);
            }
            (Some(xhat), Some(inv_std))
        } else {
            (None, None)
        };
        let activation: Vec<Vec<f64>> = pre
            .iter()
            .map(|z| z.iter().map(|&v| params.nonlinearity.apply(v)).collect())
            .collect();
        let mut next = activation.clone();
        let mask = use_dropout.then(|| {
            let masks: Vec<Vec<f64>> = next
                .iter()
                .map(|row| dropout_mask(&mut mask_rng, row.len(), dropout_rate))
                .collect();
            apply_mask(&mut next, &masks);
            masks
        });
        layers.push(LayerTrace {
            input: std::mem::replace(&mut current, next),
            normalized,
            inv_std,
            activation,
            mask,
        });
    }

    let probabilities: Vec<Vec<f64>> = current
        .iter()
        .zip(&examples)
        .map(|(h, ex)| {
            let mut logits = params.output.weight.matvec(h);
            axpy(1.0, &params.output.bias, &mut logits);
            if params.variant == Variant::ConfSoftmax {
                axpy(ex.mean_confidence, &params.conf_output, &mut logits);
            }
            softmax(&logits)
        })
        .collect();

    let trace = ForwardTrace {
        version: params.version,
        train,
        examples,
        input_mask,
        layers,
        final_input: current,
        batch_means,
        batch_vars,
        probabilities: probabilities.clone(),
    };
    Ok((probabilities, trace))
}

/// Eval-mode probabilities for a batch.
pub fn predict_proba(params: &DanParameters, batch: &[DanInput]) -> Result<Vec<Vec<f64>>> {
    forward(params, batch, Mode::Eval).map(|(p, _)| p)
}

/// Mean cross-entropy −ln p[gold] over the batch.
pub fn loss(probabilities: &[Vec<f64>], gold: &[usize]) -> Result<f64> {
    if probabilities.len() != gold.len() || gold.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            probabilities.len(),
            gold.len()
        )));
    }
    let mut total = 0.0;
    for (p, &g) in probabilities.iter().zip(gold) {
        let pg = *p
            .get(g)
            .ok_or_else(|| Error::Shape(format!("label {g} outside {} classes", p.len())))?;
        total -= pg.max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / gold.len() as f64)
}
