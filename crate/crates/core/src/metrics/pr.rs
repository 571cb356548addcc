use serde::Serialize;

use crate::error::{Error, Result};

/// Precision-recall curve with one point per distinct score.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrCurve {
    /// `(recall, precision)` in order of decreasing threshold.
    pub points: Vec<(f64, f64)>,
    pub aupr: f64,
}

impl PrCurve {
    /// Step-rule area recomputed from the stored points.
    pub fn area_from_points(&self) -> f64 {
        let mut prev_recall = 0.0;
        let mut area = 0.0;
        for &(r, p) in &self.points {
            area += (r - prev_recall) * p;
            prev_recall = r;
        }
        area
    }
}

/// Sweeps thresholds from the highest score down, treating equal scores as
/// one group, and accumulates average precision `sum (R_n - R_{n-1}) P_n`.
pub fn pr_curve(scores: &[f64], truth: &[bool]) -> Result<PrCurve> {
    if scores.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} truth values",
            scores.len(),
            truth.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let total_pos = truth.iter().filter(|t| **t).count();
    if total_pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut aupr = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += usize::from(truth[order[i]]);
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / seen as f64;
        aupr += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push((recall, precision));
    }
    Ok(PrCurve { points, aupr })
}

pub fn average_precision(scores: &[f64], truth: &[bool]) -> Result<f64> {
    pr_curve(scores, truth).map(|c| c.aupr)
}
