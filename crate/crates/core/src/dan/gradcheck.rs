//! Central finite-difference verification of [`super::backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::backward::Gradients;
use super::forward::{forward, loss, DanInput, Mode};
use super::params::{DanParameters, DanShape, Nonlinearity, Variant};
use crate::error::Result;

/// Above this many parameters a random subsample is checked.
pub const MAX_CHECKED: usize = 10_000;
/// Gradients smaller than this are compared absolutely rather than
/// relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// |a − n| / max(|a|, |n|, floor)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Copy of `params` with batchnorm removed, for a deterministic forward.
fn without_batchnorm(params: &DanParameters) -> DanParameters {
    let mut p = params.clone();
    p.batchnorm.clear();
    p
}

fn batch_loss(params: &DanParameters, batch: &[DanInput], gold: &[usize]) -> Result<f64> {
    let (probs, _) = forward(params, batch, Mode::deterministic_train())?;
    loss(&probs, gold)
}

/// Max relative error between analytic gradients and central differences
/// with step `epsilon`. Batchnorm and dropout are switched off.
pub fn finite_difference_check(
    params: &DanParameters,
    batch: &[DanInput],
    gold: &[usize],
    epsilon: f64,
) -> Result<GradCheckReport> {
    let params = without_batchnorm(params);
    let (_, trace) = forward(&params, batch, Mode::deterministic_train())?;
    let grads = super::backward(&params, &trace, gold)?;
    compare_with_finite_differences(&params, batch, gold, epsilon, &grads)
}

/// Checks supplied gradients against central differences of the loss of
/// `params` (used as given: the caller decides about batchnorm).
pub fn compare_with_finite_differences(
    params: &DanParameters,
    batch: &[DanInput],
    gold: &[usize],
    epsilon: f64,
    grads: &Gradients,
) -> Result<GradCheckReport> {
    let analytic = grads.slices();
    let mut work = params.clone();
    let total: usize = analytic.iter().map(|(_, v)| v.len()).sum();

    // (slice, index) pairs to check.
    let mut coords: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(s, (_, v))| (0..v.len()).map(move |i| (s, i)))
        .collect();
    if total > MAX_CHECKED {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6ad_c4ec);
        let keep = rand::seq::index::sample(&mut rng, total, MAX_CHECKED).into_vec();
        let mut keep_sorted = keep;
        keep_sorted.sort_unstable();
        coords = keep_sorted.into_iter().map(|k| coords[k]).collect();
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: coords.len(),
    };
    for (s, i) in coords {
        let original = work.slices_mut()[s].1[i];
        work.slices_mut()[s].1[i] = original + epsilon;
        let plus = batch_loss(&work, batch, gold)?;
        work.slices_mut()[s].1[i] = original - epsilon;
        let minus = batch_loss(&work, batch, gold)?;
        work.slices_mut()[s].1[i] = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[s].1[i];
        let err = relative_error(a, numeric);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_parameter = analytic[s].0.clone();
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// A random network and batch: V=50, D=16, one hidden layer of 32, 10
/// classes, 4 questions of 3–8 tokens with random confidences. Every
/// parameter, including the confidence weights, is randomized.
pub fn random_instance(
    variant: Variant,
    seed: u64,
) -> Result<(DanParameters, Vec<DanInput>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = DanShape {
        vocab_size: 50,
        embedding_dim: 16,
        hidden_dims: vec![32],
        n_classes: 10,
    };
    let mut params = DanParameters::init(&shape, variant, Nonlinearity::Tanh, false, &mut rng)?;
    for layer in params
        .hidden
        .iter_mut()
        .chain(std::iter::once(&mut params.output))
    {
        for b in layer.bias.iter_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
    for w in params.conf_output.iter_mut() {
        *w = rng.gen_range(-1.0..1.0);
    }
    params.conf_recal.weight = rng.gen_range(0.5..1.5);
    params.conf_recal.bias = rng.gen_range(-0.3..0.3);
    let batch: Vec<DanInput> = (0..4)
        .map(|_| {
            let n = rng.gen_range(3..=8);
            DanInput::new(
                (0..n).map(|_| rng.gen_range(0..shape.vocab_size)).collect(),
                (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect(),
            )
        })
        .collect();
    let gold = (0..4).map(|_| rng.gen_range(0..shape.n_classes)).collect();
    Ok((params, batch, gold))
}
