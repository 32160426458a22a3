use std::collections::BTreeMap;

use super::forward::ForwardTrace;
use super::params::{DanParameters, DenseLayer, Variant};
use super::tensor::{axpy, dot, Matrix};
use crate::error::{Error, Result};

/// Loss gradients, shaped like [`DanParameters`]. Embedding gradients are
/// sparse: only rows of tokens seen in the batch are present.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embeddings: BTreeMap<usize, Vec<f64>>,
    pub embedding_shape: (usize, usize),
    pub hidden: Vec<DenseLayer>,
    pub output: DenseLayer,
    pub conf_output: Vec<f64>,
    pub conf_recal_weight: f64,
    pub conf_recal_bias: f64,
    pub batchnorm_scale: Vec<Vec<f64>>,
    pub batchnorm_shift: Vec<Vec<f64>>,
    /// Mean cross-entropy of the batch.
    pub loss: f64,
}

fn zeros_like(layer: &DenseLayer) -> DenseLayer {
    DenseLayer {
        weight: Matrix::zeros(layer.weight.rows, layer.weight.cols),
        bias: vec![0.0; layer.bias.len()],
    }
}

impl Gradients {
    /// Flat views in the same order as [`DanParameters::slices_mut`];
    /// embeddings are densified.
    pub fn slices(&self) -> Vec<(String, Vec<f64>)> {
        let (rows, cols) = self.embedding_shape;
        let mut dense = vec![0.0; rows * cols];
        for (&r, g) in &self.embeddings {
            dense[r * cols..(r + 1) * cols].copy_from_slice(g);
        }
        let mut out = vec![("embeddings".to_string(), dense)];
        for (i, layer) in self.hidden.iter().enumerate() {
            out.push((format!("hidden{i}.weight"), layer.weight.data.clone()));
            out.push((format!("hidden{i}.bias"), layer.bias.clone()));
        }
        out.push(("output.weight".into(), self.output.weight.data.clone()));
        out.push(("output.bias".into(), self.output.bias.clone()));
        out.push(("conf_output".into(), self.conf_output.clone()));
        out.push(("conf_recal".into(), vec![self.conf_recal_weight]));
        out.push(("conf_recal.bias".into(), vec![self.conf_recal_bias]));
        for (i, (s, b)) in self
            .batchnorm_scale
            .iter()
            .zip(&self.batchnorm_shift)
            .enumerate()
        {
            out.push((format!("batchnorm{i}.scale"), s.clone()));
            out.push((format!("batchnorm{i}.shift"), b.clone()));
        }
        out
    }

    /// Largest absolute entry over all tensors.
    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|(_, v)| v.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Exact gradients of the mean cross-entropy for the batch recorded in
/// `trace`.
pub fn backward(params: &DanParameters, trace: &ForwardTrace, gold: &[usize]) -> Result<Gradients> {
    if trace.version != params.version {
        return Err(Error::StaleTrace {
            trace: trace.version,
            params: params.version,
        });
    }
    if !trace.train {
        return Err(Error::InvalidArgument(
            "backward needs a train-mode forward trace".into(),
        ));
    }
    let bsz = trace.batch_size();
    if gold.len() != bsz {
        return Err(Error::Shape(format!(
            "{bsz} examples but {} labels",
            gold.len()
        )));
    }
    let loss = super::loss(&trace.probabilities, gold)?;

    let mut grads = Gradients {
        embeddings: BTreeMap::new(),
        embedding_shape: (params.embeddings.rows, params.embeddings.cols),
        hidden: params.hidden.iter().map(zeros_like).collect(),
        output: zeros_like(&params.output),
        conf_output: vec![0.0; params.conf_output.len()],
        conf_recal_weight: 0.0,
        conf_recal_bias: 0.0,
        batchnorm_scale: params
            .batchnorm
            .iter()
            .map(|b| vec![0.0; b.scale.len()])
            .collect(),
        batchnorm_shift: params
            .batchnorm
            .iter()
            .map(|b| vec![0.0; b.shift.len()])
            .collect(),
        loss,
    };

    // Output layer.
    let scale = 1.0 / bsz as f64;
    let mut upstream: Vec<Vec<f64>> = Vec::with_capacity(bsz);
    for (b, probs) in trace.probabilities.iter().enumerate() {
        let mut dlogits: Vec<f64> = probs.iter().map(|p| p * scale).collect();
        dlogits[gold[b]] -= scale;
        grads
            .output
            .weight
            .add_outer(&dlogits, &trace.final_input[b]);
        axpy(1.0, &dlogits, &mut grads.output.bias);
        if params.variant == Variant::ConfSoftmax {
            axpy(
                trace.examples[b].mean_confidence,
                &dlogits,
                &mut grads.conf_output,
            );
        }
        upstream.push(params.output.weight.matvec_t(&dlogits));
    }

    // Hidden layers, last to first.
    for (li, layer_trace) in trace.layers.iter().enumerate().rev() {
        let layer = &params.hidden[li];
        let width = layer.outputs();
        if let Some(masks) = &layer_trace.mask {
            for (g, m) in upstream.iter_mut().zip(masks) {
                for (x, k) in g.iter_mut().zip(m) {
                    *x *= k;
                }
            }
        }
        // Through the nonlinearity.
        for (g, a) in upstream.iter_mut().zip(&layer_trace.activation) {
            for (x, &y) in g.iter_mut().zip(a) {
                *x *= params.nonlinearity.derivative_from_output(y);
            }
        }
        // Through batchnorm (batch statistics).
        if let (Some(xhat), Some(inv_std)) = (&layer_trace.normalized, &layer_trace.inv_std) {
            let bn = &params.batchnorm[li];
            let mut sum_dxhat = vec![0.0; width];
            let mut sum_dxhat_xhat = vec![0.0; width];
            for (g, xh) in upstream.iter().zip(xhat) {
                for j in 0..width {
                    grads.batchnorm_scale[li][j] += g[j] * xh[j];
                    grads.batchnorm_shift[li][j] += g[j];
                    let dxh = g[j] * bn.scale[j];
                    sum_dxhat[j] += dxh;
                    sum_dxhat_xhat[j] += dxh * xh[j];
                }
            }
            let n = bsz as f64;
            for (g, xh) in upstream.iter_mut().zip(xhat) {
                for j in 0..width {
                    let dxh = g[j] * bn.scale[j];
                    g[j] = inv_std[j] / n * (n * dxh - sum_dxhat[j] - xh[j] * sum_dxhat_xhat[j]);
                }
            }
        }
        let mut next = Vec::with_capacity(bsz);
        for (dz, x) in upstream.iter().zip(&layer_trace.input) {
            grads.hidden[li].weight.add_outer(dz, x);
            axpy(1.0, dz, &mut grads.hidden[li].bias);
            next.push(layer.weight.matvec_t(dz));
        }
        upstream = next;
    }

    // Encoder dropout.
    if let Some(masks) = &trace.input_mask {
        for (g, m) in upstream.iter_mut().zip(masks) {
            for (x, k) in g.iter_mut().zip(m) {
                *x *= k;
            }
        }
    }

    // Encoder: r = Σ w_i E[t_i] / denom.
    let dim = params.embeddings.cols;
    for (ex, dr) in trace.examples.iter().zip(&upstream) {
        for (&t, &w) in ex.token_ids.iter().zip(&ex.weights) {
            let row = grads.embeddings.entry(t).or_insert_with(|| vec![0.0; dim]);
            axpy(w / ex.denom, dr, row);
        }
        if params.variant == Variant::ConfLearned {
            for (&t, &c) in ex.token_ids.iter().zip(&ex.confidences) {
                let e = params.embeddings.row(t);
                // ∂L/∂w_i; with Σw normalization the denominator also depends on w_i.
                let dw = if ex.normalized {
                    (dot(dr, e) - dot(dr, &ex.encoded)) / ex.denom
                } else {
                    dot(dr, e) / ex.denom
                };
                grads.conf_recal_weight += dw * c;
                grads.conf_recal_bias += dw;
            }
        }
    }
    Ok(grads)
}
