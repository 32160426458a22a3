use super::backward::Gradients;
use super::params::DanParameters;

/// Adaptive moment estimation over every trainable tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// One update. With `freeze_embeddings` the embedding matrix is left as is.
    pub fn step(&mut self, params: &mut DanParameters, grads: &Gradients, freeze_embeddings: bool) {
        let grad_slices = grads.slices();
        if self.first.is_empty() {
            self.first = grad_slices
                .iter()
                .map(|(_, g)| vec![0.0; g.len()])
                .collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, ((name, target), (_, g))) in params
            .slices_mut()
            .into_iter()
            .zip(&grad_slices)
            .enumerate()
        {
            if freeze_embeddings && name == "embeddings" {
                continue;
            }
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..target.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                target[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        params.bump_version();
    }
}

/// Multiplies the learning rate by `factor` once the monitored metric has
/// not improved for `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    pub factor: f64,
    pub patience: usize,
    best: f64,
    stale: usize,
}

impl PlateauSchedule {
    pub fn new(factor: f64, patience: usize) -> Self {
        PlateauSchedule {
            factor,
            patience,
            best: f64::NEG_INFINITY,
            stale: 0,
        }
    }

    /// Records an epoch's metric (higher is better); returns the new rate.
    pub fn observe(&mut self, metric: f64, lr: f64) -> f64 {
        if metric > self.best {
            self.best = metric;
            self.stale = 0;
            return lr;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.stale = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}
