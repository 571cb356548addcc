//! k-fold cross-validation and the training-set-size ablation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_snapshot, EvalReport};
use super::report::{CvReport, MeanStd};
use crate::classifier::{LabelStats, ModelSnapshot};
use crate::dataset::LabeledExample;
use crate::error::{Error, Result};
use crate::features::{ExtractorConfig, FeatureVector};
use crate::optim::{train, TrainConfig};
use crate::topics::TopicLabels;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    /// Seeded uniform shuffle of the ids (sorted first, so input order does
    /// not matter), cut into `k` contiguous folds; the first `n % k` folds
    /// take one extra id.
    pub fn new<S: AsRef<str>>(ids: &[S], k: usize, seed: u64) -> Result<Self> {
        let mut sorted: Vec<String> = ids.iter().map(|s| s.as_ref().to_string()).collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("duplicate id '{}'", w[0])));
        }
        if k < 2 || k > sorted.len() {
            return Err(Error::InvalidArgument(format!(
                "need 2 <= k <= {} items, got k = {k}",
                sorted.len()
            )));
        }
        sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (base, extra) = (sorted.len() / k, sorted.len() % k);
        let mut assignments = BTreeMap::new();
        let mut it = sorted.into_iter();
        for fold in 0..k {
            let size = base + usize::from(fold < extra);
            for id in it.by_ref().take(size) {
                assignments.insert(id, fold);
            }
        }
        Ok(FoldPlan { k, seed, assignments })
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Trains a fresh model on `train_set` from prevalence-initialized weights.
pub fn fit(
    train_set: &[&LabeledExample],
    extractor: &ExtractorConfig,
    cfg: &TrainConfig,
) -> Result<ModelSnapshot> {
    let mut sorted: Vec<&LabeledExample> = train_set.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let stats = LabelStats::from_labels(sorted.iter().map(|e| &e.labels));
    let init = ModelSnapshot::initial_smoothed(extractor.clone(), &stats, cfg.dropout)?;
    let data: Vec<(FeatureVector, TopicLabels)> =
        sorted.iter().map(|e| (e.features.clone(), e.labels)).collect();
    Ok(train(&data, cfg, &init)?.snapshot)
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains on `k - 1` folds and evaluates on the held-out one, for every fold.
///
/// Folds run in parallel; each gets its own training seed derived from
/// `cfg.seed` and the fold index, and the summary is assembled in fold order.
pub fn cross_validate(
    data: &[LabeledExample],
    plan: &FoldPlan,
    extractor: &ExtractorConfig,
    cfg: &TrainConfig,
) -> Result<CvReport> {
    let ids: BTreeSet<&str> = data.iter().map(|e| e.id.as_str()).collect();
    if ids.len() != data.len() {
        return Err(Error::InvalidArgument("dataset contains duplicate ids".into()));
    }
    if ids.len() != plan.assignments.len() || ids.iter().any(|id| plan.fold_of(id).is_none()) {
        return Err(Error::InvalidArgument(
            "fold plan does not cover exactly the dataset ids".into(),
        ));
    }
    let folds: Vec<EvalReport> = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let (held, rest): (Vec<&LabeledExample>, Vec<&LabeledExample>) =
                data.iter().partition(|e| plan.fold_of(&e.id) == Some(fold));
            let fold_cfg = TrainConfig {
                seed: fold_seed(cfg.seed, fold),
                ..cfg.clone()
            };
            let model = fit(&rest, extractor, &fold_cfg)?;
            let mut report = evaluate_snapshot(&model, held.iter().map(|e| (&e.features, &e.labels)))?;
            report.fold_id = Some(fold);
            Ok(report)
        })
        .collect::<Result<_>>()?;
    Ok(CvReport::summarize(plan.k, plan.seed, folds))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub size: usize,
    pub macro_aupr: Option<MeanStd>,
    pub report: CvReport,
}

/// For each size: seeded subsample, then `k`-fold CV; reports mean macro AUPR.
pub fn ablate_data_size(
    data: &[LabeledExample],
    sizes: &[usize],
    k: usize,
    seed: u64,
    extractor: &ExtractorConfig,
    cfg: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    let mut sorted: Vec<&LabeledExample> = data.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    sizes
        .iter()
        .map(|&size| {
            if size > sorted.len() {
                return Err(Error::InvalidArgument(format!(
                    "size {size} exceeds dataset size {}",
                    sorted.len()
                )));
            }
            let subset: Vec<LabeledExample> = if size == sorted.len() {
                sorted.iter().map(|e| (*e).clone()).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                sorted
                    .choose_multiple(&mut rng, size)
                    .map(|e| (*e).clone())
                    .collect()
            };
            let ids: Vec<&str> = subset.iter().map(|e| e.id.as_str()).collect();
            let plan = FoldPlan::new(&ids, k, seed)?;
            let report = cross_validate(&subset, &plan, extractor, cfg)?;
            Ok(AblationRow {
                size,
                macro_aupr: report.averaged.macro_aupr,
                report,
            })
        })
        .collect()
}

/// `size,macro_aupr_mean,macro_aupr_std`
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("size,macro_aupr_mean,macro_aupr_std\n");
    for r in rows {
        let (m, s) = match r.macro_aupr {
            Some(ms) => (format!("{:.6}", ms.mean), ms.std.map(|s| format!("{s:.6}")).unwrap_or_default()),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!("{},{m},{s}\n", r.size));
    }
    out
}
