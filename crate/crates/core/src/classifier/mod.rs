//! Multi-label classification head.
//!
//! Layer order is batch normalization, dropout, linear, per-label sigmoid.
//! The output bias starts at the log-odds of each label's prevalence, so an
//! untrained head with zero weights predicts exactly the training prevalence.

mod head;
mod snapshot_io;

pub use head::{VAR_FLOOR, BatchNorm, DenseBatch, DropoutMask, Grads, Head, TrainForward};
pub use snapshot_io::{load_snapshot, read_snapshot, save_snapshot, write_snapshot, FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ExtractorConfig, FeatureVector};
use crate::topics::{Topic, TopicLabels, NUM_TOPICS};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-5;

/// Positive and negative counts per label over one dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStats {
    pub pos: Vec<u64>,
    pub neg: Vec<u64>,
}

impl LabelStats {
    pub fn new(pos: Vec<u64>, neg: Vec<u64>) -> Result<Self> {
        if pos.len() != neg.len() {
            return Err(Error::Shape(format!(
                "{} positive counts vs {} negative counts",
                pos.len(),
                neg.len()
            )));
        }
        let stats = LabelStats { pos, neg };
        let total = stats.total();
        if stats.pos.iter().zip(&stats.neg).any(|(p, n)| p + n != total) {
            return Err(Error::InvalidArgument(
                "pos + neg must equal the dataset size for every label".into(),
            ));
        }
        Ok(stats)
    }

    pub fn from_labels<'a, I: IntoIterator<Item = &'a TopicLabels>>(labels: I) -> Self {
        let mut pos = vec![0u64; NUM_TOPICS];
        let mut n = 0u64;
        for l in labels {
            n += 1;
            for (k, v) in l.0.iter().enumerate() {
                pos[k] += *v as u64;
            }
        }
        let neg = pos.iter().map(|p| n - p).collect();
        LabelStats { pos, neg }
    }

    pub fn n_labels(&self) -> usize {
        self.pos.len()
    }

    pub fn total(&self) -> u64 {
        self.pos.first().map_or(0, |p| p + self.neg[0])
    }

    pub fn prevalence(&self) -> Vec<f64> {
        self.pos
            .iter()
            .zip(&self.neg)
            .map(|(&p, &n)| p as f64 / (p + n) as f64)
            .collect()
    }

    /// Add-one smoothing: one extra positive and one extra negative per label.
    pub fn add_one(&self) -> Self {
        LabelStats {
            pos: self.pos.iter().map(|p| p + 1).collect(),
            neg: self.neg.iter().map(|n| n + 1).collect(),
        }
    }
}

/// Output-layer bias `ln(pos / neg)` per label.
pub fn init_bias(stats: &LabelStats) -> Result<Vec<f64>> {
    stats
        .pos
        .iter()
        .zip(&stats.neg)
        .enumerate()
        .map(|(k, (&pos, &neg))| {
            if pos == 0 || neg == 0 {
                let topic = Topic::from_index(k).unwrap_or(Topic::CovidStats);
                Err(Error::ZeroLabelCount { topic, pos, neg })
            } else {
                Ok((pos as f64 / neg as f64).ln())
            }
        })
        .collect()
}

/// [`init_bias`], falling back to add-one smoothing when a label has no
/// positives or no negatives.
pub fn init_bias_or_smoothed(stats: &LabelStats) -> Vec<f64> {
    match init_bias(stats) {
        Ok(b) => b,
        Err(e) => {
            log::warn!("{e}; using add-one smoothed counts");
            init_bias(&stats.add_one()).expect("smoothed counts are positive")
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Trained (or freshly initialized) model, immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSnapshot {
    pub extractor: ExtractorConfig,
    pub head: Head,
    pub threshold: Vec<f64>,
    pub version: String,
    pub trained_on: String,
}

impl ModelSnapshot {
    /// Zero weights, identity batch norm and prevalence-matched bias.
    pub fn initial(extractor: ExtractorConfig, stats: &LabelStats, dropout: f64) -> Result<Self> {
        if stats.n_labels() != NUM_TOPICS {
            return Err(Error::Shape(format!(
                "expected {NUM_TOPICS} labels, got {}",
                stats.n_labels()
            )));
        }
        let bias = init_bias(stats)?;
        let head = Head::new(extractor.dim, bias, dropout)?;
        Ok(ModelSnapshot {
            extractor,
            head,
            threshold: vec![DEFAULT_THRESHOLD; NUM_TOPICS],
            version: "init".into(),
            trained_on: String::new(),
        })
    }

    /// Like [`ModelSnapshot::initial`] but smooths zero counts instead of failing.
    pub fn initial_smoothed(
        extractor: ExtractorConfig,
        stats: &LabelStats,
        dropout: f64,
    ) -> Result<Self> {
        match Self::initial(extractor.clone(), stats, dropout) {
            Err(e @ Error::ZeroLabelCount { .. }) => {
                log::warn!("{e}; using add-one smoothed counts");
                Self::initial(extractor, &stats.add_one(), dropout)
            }
            other => other,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.extractor.validate()?;
        self.head.validate()?;
        if self.head.dim != self.extractor.dim {
            return Err(Error::Shape(format!(
                "head dim {} does not match extractor dim {}",
                self.head.dim, self.extractor.dim
            )));
        }
        if self.head.n_labels != NUM_TOPICS || self.threshold.len() != NUM_TOPICS {
            return Err(Error::Shape(format!(
                "expected {NUM_TOPICS} labels and thresholds"
            )));
        }
        if self.threshold.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::Config("thresholds must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Inference-mode probabilities: running BN statistics, no dropout.
    pub fn forward_infer(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        self.head.forward_infer(x)
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<TopicLabels> {
        let probs = self.forward_infer(x)?;
        Ok(self.decide(&probs))
    }

    /// Thresholds probabilities with the `>=` tie rule.
    pub fn decide(&self, probs: &[f64]) -> TopicLabels {
        let mut labels = TopicLabels::empty();
        for (k, (p, t)) in probs.iter().zip(&self.threshold).enumerate() {
            labels.0[k] = p >= t;
        }
        labels
    }

    pub fn scorer(&self) -> Scorer {
        Scorer::new(&self.head)
    }
}

/// Inference head folded into one affine map per label; cost is
/// proportional to the number of nonzero features.
#[derive(Clone, Debug)]
pub struct Scorer {
    dim: usize,
    n_labels: usize,
    scale: Vec<f64>,
    weights: Vec<f64>,
    offset: Vec<f64>,
}

impl Scorer {
    pub fn new(head: &Head) -> Self {
        let k = head.n_labels;
        let scale: Vec<f64> = head
            .bn
            .gamma
            .iter()
            .zip(&head.bn.running_var)
            .map(|(g, v)| g / (v + head.bn.eps).sqrt())
            .collect();
        let mut offset = head.bias.clone();
        for d in 0..head.dim {
            let shift = head.bn.beta[d] - scale[d] * head.bn.running_mean[d];
            if shift != 0.0 {
                for (o, w) in offset.iter_mut().zip(&head.weights[d * k..(d + 1) * k]) {
                    *o += shift * w;
                }
            }
        }
        Scorer {
            dim: head.dim,
            n_labels: k,
            scale,
            weights: head.weights.clone(),
            offset,
        }
    }

    pub fn logits(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        if x.dim() != self.dim {
            return Err(Error::Shape(format!(
                "feature dim {} does not match model dim {}",
                x.dim(),
                self.dim
            )));
        }
        let k = self.n_labels;
        let mut z = self.offset.clone();
        for &(d, v) in x.entries() {
            let d = d as usize;
            let a = self.scale[d] * v;
            for (zk, w) in z.iter_mut().zip(&self.weights[d * k..(d + 1) * k]) {
                *zk += a * w;
            }
        }
        Ok(z)
    }

    pub fn probabilities(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }
}
