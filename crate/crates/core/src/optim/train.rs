//! Mini-batch training of the classification head.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{adamw_step, lr_at, OptimizerState, Param, TrainConfig};
use crate::classifier::{DenseBatch, DropoutMask, Head, ModelSnapshot, VAR_FLOOR};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::topics::TopicLabels;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub snapshot: ModelSnapshot,
    pub losses: Vec<LossRecord>,
}

impl TrainOutcome {
    /// `step,epoch,lr,loss` rows.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,epoch,lr,loss\n");
        for r in &self.losses {
            out.push_str(&format!("{},{},{:e},{:.12}\n", r.step, r.epoch, r.lr, r.loss));
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
#[error("training aborted at step {step}: {reason}")]
pub struct TrainAborted {
    pub reason: String,
    pub step: u64,
    /// Model and loss log as of the last step whose loss was finite.
    pub last_finite: Box<TrainOutcome>,
}

/// Minimizes mean per-label binary cross-entropy with AdamW over seeded,
/// shuffled mini-batches.
///
/// Batch-norm running statistics are seeded with the moments of the whole
/// training set before the first step and then follow the momentum update.
/// `epochs == 0` returns `init` untouched.
pub fn train(
    dataset: &[(FeatureVector, TopicLabels)],
    cfg: &TrainConfig,
    init: &ModelSnapshot,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    init.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            snapshot: init.clone(),
            losses: Vec::new(),
        });
    }
    let features: Vec<&FeatureVector> = dataset.iter().map(|(x, _)| x).collect();
    let targets: Vec<f64> = dataset.iter().flat_map(|(_, y)| y.as_f64()).collect();

    let mut head = init.head.clone();
    let fingerprint = content_fingerprint(dataset);
    let finish = |head: Head, losses: Vec<LossRecord>| TrainOutcome {
        snapshot: ModelSnapshot {
            head,
            trained_on: fingerprint.clone(),
            ..init.clone()
        },
        losses,
    };

    match fit_head(&mut head, &features, &targets, cfg) {
        Ok(losses) => Ok(finish(head, losses)),
        Err(FitFailure {
            reason,
            step,
            last_head,
            losses,
        }) => Err(Error::TrainingAborted(Box::new(TrainAborted {
            reason,
            step,
            last_finite: Box::new(finish(last_head, losses)),
        }))),
    }
}

pub(crate) struct FitFailure {
    pub reason: String,
    pub step: u64,
    pub last_head: Head,
    pub losses: Vec<LossRecord>,
}

/// Training loop over raw label rows; `targets` is row-major `n x n_labels`.
pub(crate) fn fit_head(
    head: &mut Head,
    features: &[&FeatureVector],
    targets: &[f64],
    cfg: &TrainConfig,
) -> std::result::Result<Vec<LossRecord>, FitFailure> {
    let n = features.len();
    let (d, k) = (head.dim, head.n_labels);
    seed_running_stats(head, features);

    let steps_per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimizerState::new(&[d * k, k, d, d]);
    let mut losses = Vec::with_capacity(total_steps as usize);
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let fail = |reason: String, head: &Head, losses: &[LossRecord]| FitFailure {
                reason,
                step,
                last_head: head.clone(),
                losses: losses.to_vec(),
            };
            let lr = lr_at(step, total_steps, cfg).expect("step within schedule");
            let batch = DenseBatch::from_features(d, chunk.iter().map(|&i| features[i]))
                .map_err(|e| fail(e.to_string(), head, &losses))?;
            let batch_targets: Vec<f64> = chunk
                .iter()
                .flat_map(|&i| targets[i * k..(i + 1) * k].iter().copied())
                .collect();
            let mask = DropoutMask::sample(chunk.len(), d, head.dropout, &mut rng);
            let fwd = head
                .forward_train(&batch, &mask)
                .map_err(|e| fail(e.to_string(), head, &losses))?;
            let loss = head.loss(&fwd, &batch_targets);
            if !loss.is_finite() {
                return Err(fail(format!("loss is {loss}"), head, &losses));
            }
            let grads = head.backward(&fwd, &mask, &batch_targets);
            let before = head.clone();
            {
                let Head { bn, weights, bias, .. } = &mut *head;
                let mut params = [
                    Param { values: weights, grads: &grads.weights, decay: true },
                    Param { values: bias, grads: &grads.bias, decay: false },
                    Param { values: &mut bn.gamma, grads: &grads.gamma, decay: true },
                    Param { values: &mut bn.beta, grads: &grads.beta, decay: false },
                ];
                adamw_step(&mut params, &mut state, lr, cfg)
                    .map_err(|e| fail(e.to_string(), &before, &losses))?;
            }
            head.update_running_stats(&fwd);
            losses.push(LossRecord { step, epoch, lr, loss });
            step += 1;
        }
    }
    Ok(losses)
}

fn seed_running_stats(head: &mut Head, features: &[&FeatureVector]) {
    let n = features.len() as f64;
    let mut sum = vec![0.0; head.dim];
    let mut sum_sq = vec![0.0; head.dim];
    for f in features {
        for &(i, v) in f.entries() {
            sum[i as usize] += v;
            sum_sq[i as usize] += v * v;
        }
    }
    for j in 0..head.dim {
        let mean = sum[j] / n;
        head.bn.running_mean[j] = mean;
        head.bn.running_var[j] = (sum_sq[j] / n - mean * mean).max(VAR_FLOOR);
    }
}

/// Hex SHA-256 prefix over the labels and feature entries of a dataset.
pub fn content_fingerprint(dataset: &[(FeatureVector, TopicLabels)]) -> String {
    let mut h = Sha256::new();
    for (x, y) in dataset {
        h.update((x.dim() as u64).to_le_bytes());
        for &(i, v) in x.entries() {
            h.update(i.to_le_bytes());
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(y.0.map(u8::from));
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}
