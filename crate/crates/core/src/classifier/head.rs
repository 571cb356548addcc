use rand::Rng;

use super::{sigmoid, BN_EPSILON, BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Lower bound kept on running variances so they stay strictly positive even
/// for features that never fire.
pub const VAR_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    /// gamma = 1, beta = 0, running mean 0 and variance 1.
    pub fn identity(dim: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            eps: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }
}

/// Row-major `rows x dim` matrix of densified features.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBatch {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl DenseBatch {
    pub fn from_features<'a, I>(dim: usize, features: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FeatureVector>,
    {
        let mut data = Vec::new();
        let mut rows = 0;
        for f in features {
            if f.dim() != dim {
                return Err(Error::Shape(format!(
                    "feature dim {} does not match model dim {dim}",
                    f.dim()
                )));
            }
            let start = data.len();
            data.resize(start + dim, 0.0);
            f.write_dense(&mut data[start..]);
            rows += 1;
        }
        Ok(DenseBatch { rows, dim, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Keep/drop decisions for every activation in a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub rows: usize,
    pub dim: usize,
    pub keep: Vec<bool>,
}

impl DropoutMask {
    pub fn all_ones(rows: usize, dim: usize) -> Self {
        DropoutMask {
            rows,
            dim,
            keep: vec![true; rows * dim],
        }
    }

    /// Each unit kept independently with probability `1 - rate`.
    pub fn sample<R: Rng + ?Sized>(rows: usize, dim: usize, rate: f64, rng: &mut R) -> Self {
        let keep = (0..rows * dim).map(|_| rng.random::<f64>() >= rate).collect();
        DropoutMask { rows, dim, keep }
    }
}

/// Intermediate values of a training-mode forward pass, kept for backprop.
#[derive(Clone, Debug)]
pub struct TrainForward {
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub xhat: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub rows: usize,
}

impl TrainForward {
    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().copied().map(sigmoid).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub dim: usize,
    pub n_labels: usize,
    pub bn: BatchNorm,
    /// Row-major `dim x n_labels`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub dropout: f64,
}

impl Head {
    pub fn new(dim: usize, bias: Vec<f64>, dropout: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout rate {dropout} not in [0, 1)")));
        }
        let n_labels = bias.len();
        Ok(Head {
            dim,
            n_labels,
            bn: BatchNorm::identity(dim),
            weights: vec![0.0; dim * n_labels],
            bias,
            dropout,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        let bn = &self.bn;
        if bn.gamma.len() != d
            || bn.beta.len() != d
            || bn.running_mean.len() != d
            || bn.running_var.len() != d
            || self.weights.len() != d * self.n_labels
            || self.bias.len() != self.n_labels
        {
            return Err(Error::Shape("inconsistent parameter shapes".into()));
        }
        if bn.running_var.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("running variances must be positive".into()));
        }
        Ok(())
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim {
            return Err(Error::Shape(format!(
                "feature dim {dim} does not match model dim {}",
                self.dim
            )));
        }
        Ok(())
    }

    pub fn forward_infer(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        self.check_dim(x.dim())?;
        let dense = x.to_dense();
        let k = self.n_labels;
        let mut z = self.bias.clone();
        for (d, xd) in dense.iter().enumerate() {
            let y = self.bn.gamma[d] * (xd - self.bn.running_mean[d])
                / (self.bn.running_var[d] + self.bn.eps).sqrt()
                + self.bn.beta[d];
            if y != 0.0 {
                for (zk, w) in z.iter_mut().zip(&self.weights[d * k..(d + 1) * k]) {
                    *zk += y * w;
                }
            }
        }
        Ok(z.into_iter().map(sigmoid).collect())
    }

    /// Batch statistics for normalization, `mask` for dropout.
    pub fn forward_train(&self, batch: &DenseBatch, mask: &DropoutMask) -> Result<TrainForward> {
        self.check_dim(batch.dim)?;
        if batch.rows == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if mask.rows != batch.rows || mask.dim != batch.dim {
            return Err(Error::Shape("dropout mask does not match batch".into()));
        }
        let (b, d, k) = (batch.rows, self.dim, self.n_labels);
        let (mean, var) = batch_moments(batch);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.bn.eps).sqrt()).collect();
        let scale = 1.0 / (1.0 - self.dropout);

        let mut xhat = vec![0.0; b * d];
        let mut hidden = vec![0.0; b * d];
        let mut logits = vec![0.0; b * k];
        for i in 0..b {
            let row = batch.row(i);
            let z = &mut logits[i * k..(i + 1) * k];
            z.copy_from_slice(&self.bias);
            for j in 0..d {
                let xh = (row[j] - mean[j]) * inv_std[j];
                xhat[i * d + j] = xh;
                if !mask.keep[i * d + j] {
                    continue;
                }
                let h = (self.bn.gamma[j] * xh + self.bn.beta[j]) * scale;
                hidden[i * d + j] = h;
                if h != 0.0 {
                    for (zk, w) in z.iter_mut().zip(&self.weights[j * k..(j + 1) * k]) {
                        *zk += h * w;
                    }
                }
            }
        }
        Ok(TrainForward {
            batch_mean: mean,
            batch_var: var,
            xhat,
            hidden,
            logits,
            rows: b,
        })
    }

    /// Mean binary cross-entropy over every (sample, label) cell.
    pub fn loss(&self, fwd: &TrainForward, targets: &[f64]) -> f64 {
        mean_bce(&fwd.logits, targets)
    }

    /// Gradients of [`Head::loss`] with respect to weights, bias, gamma and beta.
    pub fn backward(&self, fwd: &TrainForward, mask: &DropoutMask, targets: &[f64]) -> Grads {
        let (b, d, k) = (fwd.rows, self.dim, self.n_labels);
        let cells = (b * k) as f64;
        let dz: Vec<f64> = fwd
            .logits
            .iter()
            .zip(targets)
            .map(|(z, t)| (sigmoid(*z) - t) / cells)
            .collect();

        let mut g = Grads {
            weights: vec![0.0; d * k],
            bias: vec![0.0; k],
            gamma: vec![0.0; d],
            beta: vec![0.0; d],
        };
        let scale = 1.0 / (1.0 - self.dropout);
        for i in 0..b {
            let dzi = &dz[i * k..(i + 1) * k];
            for (gb, dzk) in g.bias.iter_mut().zip(dzi) {
                *gb += dzk;
            }
            for j in 0..d {
                let w = &self.weights[j * k..(j + 1) * k];
                let h = fwd.hidden[i * d + j];
                if h != 0.0 {
                    for (gw, dzk) in g.weights[j * k..(j + 1) * k].iter_mut().zip(dzi) {
                        *gw += h * dzk;
                    }
                }
                if !mask.keep[i * d + j] {
                    continue;
                }
                let dh: f64 = w.iter().zip(dzi).map(|(w, dz)| w * dz).sum();
                let dy = dh * scale;
                g.gamma[j] += dy * fwd.xhat[i * d + j];
                g.beta[j] += dy;
            }
        }
        g
    }

    pub fn update_running_stats(&mut self, fwd: &TrainForward) {
        let m = self.bn.momentum;
        for j in 0..self.dim {
            self.bn.running_mean[j] = m * self.bn.running_mean[j] + (1.0 - m) * fwd.batch_mean[j];
            self.bn.running_var[j] =
                (m * self.bn.running_var[j] + (1.0 - m) * fwd.batch_var[j]).max(VAR_FLOOR);
        }
    }

    /// Replaces the running statistics with the moments of `batch`.
    pub fn set_running_stats(&mut self, batch: &DenseBatch) {
        let (mean, var) = batch_moments(batch);
        self.bn.running_mean = mean;
        self.bn.running_var = var.into_iter().map(|v| v.max(VAR_FLOOR)).collect();
    }
}

/// Per-column mean and biased variance.
pub(crate) fn batch_moments(batch: &DenseBatch) -> (Vec<f64>, Vec<f64>) {
    let (b, d) = (batch.rows, batch.dim);
    let mut mean = vec![0.0; d];
    for i in 0..b {
        for (m, x) in mean.iter_mut().zip(batch.row(i)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b as f64);
    let mut var = vec![0.0; d];
    for i in 0..b {
        for ((v, x), m) in var.iter_mut().zip(batch.row(i)).zip(&mean) {
            let c = x - m;
            *v += c * c;
        }
    }
    var.iter_mut().for_each(|v| *v /= b as f64);
    (mean, var)
}

pub(crate) fn bce_from_logit(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

pub(crate) fn mean_bce(logits: &[f64], targets: &[f64]) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(targets)
        .map(|(z, t)| bce_from_logit(*z, *t))
        .sum();
    total / logits.len() as f64
}
