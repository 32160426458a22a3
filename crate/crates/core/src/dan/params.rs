use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Matrix;
use crate::error::{Error, Result};

/// How word confidences enter the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plain averaging network; confidences are ignored.
    Plain,
    /// Mean sentence confidence as an extra output-layer feature.
    ConfSoftmax,
    /// Embeddings weighted by raw confidence before averaging.
    ConfWeighted,
    /// Embeddings weighted by a learned affine recalibration of confidence.
    ConfLearned,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Plain,
        Variant::ConfSoftmax,
        Variant::ConfWeighted,
        Variant::ConfLearned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::ConfSoftmax => "conf_softmax",
            Variant::ConfWeighted => "conf_weighted",
            Variant::ConfLearned => "conf_learned",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Tanh,
    Relu,
    Sigmoid,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation value `y = apply(x)`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => 1.0 - y * y,
            Nonlinearity::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Sigmoid => y * (1.0 - y),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Relu => "relu",
            Nonlinearity::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Nonlinearity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Nonlinearity::Tanh),
            "relu" => Ok(Nonlinearity::Relu),
            "sigmoid" => Ok(Nonlinearity::Sigmoid),
            other => Err(format!("unknown nonlinearity '{other}'")),
        }
    }
}

/// Affine layer `W x + b` with `W` of shape (out × in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        DenseLayer {
            weight: Matrix::uniform(outputs, inputs, bound, rng),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub const EPS: f64 = 1e-5;
    /// Weight kept on the old running statistics at each update.
    pub const MOMENTUM: f64 = 0.9;

    fn new(width: usize) -> Self {
        BatchNorm {
            scale: vec![1.0; width],
            shift: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }

    pub fn update_running(&mut self, mean: &[f64], var: &[f64]) {
        for i in 0..self.running_mean.len() {
            self.running_mean[i] =
                Self::MOMENTUM * self.running_mean[i] + (1.0 - Self::MOMENTUM) * mean[i];
            self.running_var[i] =
                Self::MOMENTUM * self.running_var[i] + (1.0 - Self::MOMENTUM) * var[i];
        }
    }
}

/// f(c) = weight · c + bias, deliberately unclamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfRecal {
    pub weight: f64,
    pub bias: f64,
}

impl Default for ConfRecal {
    fn default() -> Self {
        ConfRecal {
            weight: 1.0,
            bias: 0.0,
        }
    }
}

/// Learned confidence recalibration f(c).
pub fn learned_confidence(c: f64, weight: f64, bias: f64) -> f64 {
    weight * c + bias
}

/// Shapes needed to build a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DanShape {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub n_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DanParameters {
    pub variant: Variant,
    pub nonlinearity: Nonlinearity,
    /// Divide the weighted sum by Σ weights instead of the token count.
    pub normalize_weights: bool,
    pub embeddings: Matrix,
    pub hidden: Vec<DenseLayer>,
    pub output: DenseLayer,
    /// One weight per answer on the mean confidence (`conf_softmax` only).
    pub conf_output: Vec<f64>,
    pub conf_recal: ConfRecal,
    /// Empty when batch normalization is disabled.
    pub batchnorm: Vec<BatchNorm>,
    /// Bumped on every parameter update; traces remember it.
    #[serde(skip)]
    pub(crate) version: u64,
}

impl DanParameters {
    /// Random initialization: embeddings uniform in [−0.1, 0.1], Glorot
    /// layers, zero biases, identity recalibration.
    pub fn init<R: Rng>(
        shape: &DanShape,
        variant: Variant,
        nonlinearity: Nonlinearity,
        use_batchnorm: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if shape.vocab_size == 0 || shape.embedding_dim == 0 || shape.n_classes == 0 {
            return Err(Error::Shape(format!("degenerate network shape {shape:?}")));
        }
        if shape.hidden_dims.contains(&0) {
            return Err(Error::Shape("hidden layer widths must be positive".into()));
        }
        let embeddings = Matrix::uniform(shape.vocab_size, shape.embedding_dim, 0.1, rng);
        let mut hidden = Vec::with_capacity(shape.hidden_dims.len());
        let mut width = shape.embedding_dim;
        for &h in &shape.hidden_dims {
            hidden.push(DenseLayer::glorot(width, h, rng));
            width = h;
        }
        let output = DenseLayer::glorot(width, shape.n_classes, rng);
        let batchnorm = if use_batchnorm {
            shape
                .hidden_dims
                .iter()
                .map(|&h| BatchNorm::new(h))
                .collect()
        } else {
            Vec::new()
        };
        Ok(DanParameters {
            variant,
            nonlinearity,
            normalize_weights: false,
            embeddings,
            hidden,
            output,
            conf_output: vec![0.0; shape.n_classes],
            conf_recal: ConfRecal::default(),
            batchnorm,
            version: 0,
        })
    }

    pub fn shape(&self) -> DanShape {
        DanShape {
            vocab_size: self.embeddings.rows,
            embedding_dim: self.embeddings.cols,
            hidden_dims: self.hidden.iter().map(DenseLayer::outputs).collect(),
            n_classes: self.output.outputs(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.output.outputs()
    }

    pub fn uses_batchnorm(&self) -> bool {
        !self.batchnorm.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    /// Checks that layer shapes chain from the embedding width to the
    /// output classes.
    pub fn validate(&self) -> Result<()> {
        let mut width = self.embeddings.cols;
        for (i, layer) in self.hidden.iter().enumerate() {
            if layer.inputs() != width || layer.bias.len() != layer.outputs() {
                return Err(Error::Shape(format!("hidden layer {i} does not chain")));
            }
            width = layer.outputs();
        }
        if self.output.inputs() != width || self.output.bias.len() != self.output.outputs() {
            return Err(Error::Shape("output layer does not chain".into()));
        }
        if self.conf_output.len() != self.n_classes() {
            return Err(Error::Shape(
                "confidence output weights must match classes".into(),
            ));
        }
        if self.uses_batchnorm() {
            if self.batchnorm.len() != self.hidden.len() {
                return Err(Error::Shape("one batchnorm block per hidden layer".into()));
            }
            for (bn, layer) in self.batchnorm.iter().zip(&self.hidden) {
                let w = layer.outputs();
                if [
                    bn.scale.len(),
                    bn.shift.len(),
                    bn.running_mean.len(),
                    bn.running_var.len(),
                ]
                .iter()
                .any(|&l| l != w)
                {
                    return Err(Error::Shape("batchnorm width mismatch".into()));
                }
            }
        }
        if self.embeddings.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite embedding entry".into()));
        }
        Ok(())
    }

    /// Every trainable tensor as a named flat slice, in a fixed order shared
    /// with [`super::Gradients::slices`].
    pub fn slices_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        out.push(("embeddings".into(), &mut self.embeddings.data));
        for (i, layer) in self.hidden.iter_mut().enumerate() {
            out.push((format!("hidden{i}.weight"), &mut layer.weight.data));
            out.push((format!("hidden{i}.bias"), &mut layer.bias));
        }
        out.push(("output.weight".into(), &mut self.output.weight.data));
        out.push(("output.bias".into(), &mut self.output.bias));
        out.push(("conf_output".into(), &mut self.conf_output));
        out.push((
            "conf_recal".into(),
            std::slice::from_mut(&mut self.conf_recal.weight),
        ));
        out.push((
            "conf_recal.bias".into(),
            std::slice::from_mut(&mut self.conf_recal.bias),
        ));
        for (i, bn) in self.batchnorm.iter_mut().enumerate() {
            out.push((format!("batchnorm{i}.scale"), &mut bn.scale));
            out.push((format!("batchnorm{i}.shift"), &mut bn.shift));
        }
        out
    }

    pub fn parameter_count(&mut self) -> usize {
        self.slices_mut().iter().map(|(_, s)| s.len()).sum()
    }
}
