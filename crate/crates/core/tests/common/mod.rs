//! Straight-line reference implementations used as test oracles. They share
//! no code with the library.
#![allow(dead_code)]

use tweettopic::classifier::{DropoutMask, Head, DenseBatch};

/// Average precision by recomputing precision and recall from scratch at
/// every distinct threshold.
pub fn brute_force_ap(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let pos = truth.iter().filter(|t| **t).count();
    if pos == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for t in thresholds {
        let mut tp = 0;
        let mut fp = 0;
        for (s, y) in scores.iter().zip(truth) {
            if *s >= t {
                if *y {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let r = tp as f64 / pos as f64;
        let p = tp as f64 / (tp + fp) as f64;
        ap += (r - prev_r) * p;
        prev_r = r;
    }
    Some(ap)
}

/// Fleiss' kappa written out term by term; `None` when P_e = 1.
pub fn fleiss_direct(counts: &[Vec<u32>]) -> Option<f64> {
    let n_items = counts.len() as f64;
    let r: f64 = counts[0].iter().map(|&c| c as f64).sum();
    let k = counts[0].len();
    let mut p_i_sum = 0.0;
    for row in counts {
        let mut s = 0.0;
        for &c in row {
            let c = c as f64;
            s += c * (c - 1.0);
        }
        p_i_sum += s / (r * (r - 1.0));
    }
    let p_bar = p_i_sum / n_items;
    let mut p_e = 0.0;
    for j in 0..k {
        let col: f64 = counts.iter().map(|row| row[j] as f64).sum();
        let p_j = col / (n_items * r);
        p_e += p_j * p_j;
    }
    if (1.0 - p_e).abs() < 1e-15 {
        return None;
    }
    Some((p_bar - p_e) / (1.0 - p_e))
}

/// Which parameter tensor of the head to perturb.
#[derive(Clone, Copy, Debug)]
pub enum Tensor {
    Weights,
    Bias,
    Gamma,
    Beta,
}

pub fn param_mut(head: &mut Head, t: Tensor) -> &mut Vec<f64> {
    match t {
        Tensor::Weights => &mut head.weights,
        Tensor::Bias => &mut head.bias,
        Tensor::Gamma => &mut head.bn.gamma,
        Tensor::Beta => &mut head.bn.beta,
    }
}

/// Central finite difference of the training loss for every entry of `t`.
pub fn numeric_grad(head: &Head, batch: &DenseBatch, mask: &DropoutMask, targets: &[f64], t: Tensor, h: f64) -> Vec<f64> {
    let loss = |hd: &Head| {
        let fwd = hd.forward_train(batch, mask).unwrap();
        hd.loss(&fwd, targets)
    };
    let n = param_mut(&mut head.clone(), t).len();
    (0..n)
        .map(|i| {
            let mut plus = head.clone();
            param_mut(&mut plus, t)[i] += h;
            let mut minus = head.clone();
            param_mut(&mut minus, t)[i] -= h;
            (loss(&plus) - loss(&minus)) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a|| + ||b||, tiny)`
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}
