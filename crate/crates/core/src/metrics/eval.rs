use serde::{Deserialize, Serialize};

use super::pr::average_precision;
use crate::classifier::ModelSnapshot;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::topics::{Topic, TopicLabels, NUM_TOPICS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub topic: Topic,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when the label has no positives in the evaluated set.
    pub aupr: Option<f64>,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averaged {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub macro_aupr: Option<f64>,
    pub weighted_aupr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_label: Vec<LabelMetrics>,
    pub averaged: Averaged,
    pub fold_id: Option<usize>,
    pub n_samples: usize,
}

impl EvalReport {
    pub fn label(&self, topic: Topic) -> &LabelMetrics {
        &self.per_label[topic.index()]
    }
}

fn confusions(pred: &[TopicLabels], truth: &[TopicLabels]) -> Result<[Confusion; NUM_TOPICS]> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} truth rows",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty set".into()));
    }
    let mut c = [Confusion::default(); NUM_TOPICS];
    for (p, t) in pred.iter().zip(truth) {
        for k in 0..NUM_TOPICS {
            match (p.0[k], t.0[k]) {
                (true, true) => c[k].tp += 1,
                (true, false) => c[k].fp += 1,
                (false, true) => c[k].fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(c)
}

/// Support-weighted mean over the labels that have a value.
fn weighted_mean(values: &[(Option<f64>, u64)]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0u64);
    for &(v, w) in values {
        if let Some(v) = v {
            num += v * w as f64;
            den += w;
        }
    }
    (den > 0).then(|| num / den as f64)
}

fn assemble(conf: [Confusion; NUM_TOPICS], aupr: [Option<f64>; NUM_TOPICS], n: usize) -> EvalReport {
    let per_label: Vec<LabelMetrics> = Topic::ALL
        .iter()
        .map(|&t| {
            let c = conf[t.index()];
            LabelMetrics {
                topic: t,
                precision: c.precision(),
                recall: c.recall(),
                f1: c.f1(),
                aupr: aupr[t.index()],
                support: c.support(),
            }
        })
        .collect();
    let pooled = conf.iter().fold(Confusion::default(), |a, c| Confusion {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
    });
    let f1_w: Vec<(Option<f64>, u64)> = per_label.iter().map(|m| (Some(m.f1), m.support)).collect();
    let ap_w: Vec<(Option<f64>, u64)> = per_label.iter().map(|m| (m.aupr, m.support)).collect();
    let present: Vec<f64> = per_label.iter().filter_map(|m| m.aupr).collect();
    let averaged = Averaged {
        micro_f1: pooled.f1(),
        macro_f1: per_label.iter().map(|m| m.f1).sum::<f64>() / NUM_TOPICS as f64,
        weighted_f1: weighted_mean(&f1_w).unwrap_or(0.0),
        macro_aupr: (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64),
        weighted_aupr: weighted_mean(&ap_w),
    };
    EvalReport {
        per_label,
        averaged,
        fold_id: None,
        n_samples: n,
    }
}

/// F1 fields only; AUPR needs scores, see [`evaluate_scores`].
pub fn f1_scores(pred: &[TopicLabels], truth: &[TopicLabels]) -> Result<EvalReport> {
    let conf = confusions(pred, truth)?;
    Ok(assemble(conf, [None; NUM_TOPICS], truth.len()))
}

/// Full report from per-label probabilities thresholded at `threshold`.
pub fn evaluate_scores(
    scores: &[Vec<f64>],
    truth: &[TopicLabels],
    threshold: &[f64],
) -> Result<EvalReport> {
    if threshold.len() != NUM_TOPICS || scores.iter().any(|s| s.len() != NUM_TOPICS) {
        return Err(Error::Shape(format!("expected {NUM_TOPICS} scores and thresholds per row")));
    }
    let pred: Vec<TopicLabels> = scores
        .iter()
        .map(|s| {
            let mut l = TopicLabels::empty();
            for k in 0..NUM_TOPICS {
                l.0[k] = s[k] >= threshold[k];
            }
            l
        })
        .collect();
    let conf = confusions(&pred, truth)?;
    let mut aupr = [None; NUM_TOPICS];
    for (k, slot) in aupr.iter_mut().enumerate() {
        let col: Vec<f64> = scores.iter().map(|s| s[k]).collect();
        let t: Vec<bool> = truth.iter().map(|l| l.0[k]).collect();
        *slot = match average_precision(&col, &t) {
            Ok(ap) => Some(ap),
            Err(Error::NoPositives) => None,
            Err(e) => return Err(e),
        };
    }
    Ok(assemble(conf, aupr, truth.len()))
}

/// Scores every example with the snapshot's inference path and evaluates.
pub fn evaluate_snapshot<'a, I>(model: &ModelSnapshot, data: I) -> Result<EvalReport>
where
    I: IntoIterator<Item = (&'a FeatureVector, &'a TopicLabels)>,
{
    let scorer = model.scorer();
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for (x, y) in data {
        scores.push(scorer.probabilities(x)?);
        truth.push(*y);
    }
    evaluate_scores(&scores, &truth, &model.threshold)
}
