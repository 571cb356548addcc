//! Inter-annotator agreement: Fleiss' kappa per topic and the shared
//! agreement subset.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::AnnotationRow;
use crate::error::{Error, Result};
use crate::topics::{Topic, NUM_TOPICS};

/// Per-item category counts; every row sums to `r`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatingMatrix {
    r: u32,
    counts: Vec<Vec<u32>>,
}

impl RatingMatrix {
    pub fn new(counts: Vec<Vec<u32>>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 items, got {}", counts.len())));
        }
        let width = counts[0].len();
        let r: u32 = counts[0].iter().sum();
        if width < 2 || r < 2 {
            return Err(Error::InvalidArgument("need at least 2 categories and 2 raters".into()));
        }
        if let Some(i) = counts.iter().position(|c| c.len() != width || c.iter().sum::<u32>() != r) {
            return Err(Error::InvalidArgument(format!(
                "item {i} does not have exactly {r} ratings over {width} categories"
            )));
        }
        Ok(RatingMatrix { r, counts })
    }

    /// Binary matrix from the number of positive ratings per item.
    pub fn binary(r: u32, positives: &[u32]) -> Result<Self> {
        if let Some(p) = positives.iter().find(|p| **p > r) {
            return Err(Error::InvalidArgument(format!("{p} positives exceed {r} raters")));
        }
        Self::new(positives.iter().map(|&p| vec![p, r - p]).collect())
    }

    pub fn raters(&self) -> u32 {
        self.r
    }

    pub fn items(&self) -> usize {
        self.counts.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    /// `None` when chance agreement is 1 (a single category was ever used).
    pub value: Option<f64>,
    pub p_bar: f64,
    pub p_e: f64,
}

impl Kappa {
    pub fn is_degenerate(&self) -> bool {
        self.value.is_none()
    }
}

pub fn fleiss_kappa(m: &RatingMatrix) -> Kappa {
    let r = m.r as f64;
    let n = m.counts.len() as f64;
    let k = m.counts[0].len();
    let mut p_bar = 0.0;
    let mut totals = vec![0u64; k];
    for row in &m.counts {
        let agree: u64 = row.iter().map(|&c| c as u64 * (c as u64).saturating_sub(1)).sum();
        p_bar += agree as f64 / (r * (r - 1.0));
        for (t, &c) in totals.iter_mut().zip(row) {
            *t += c as u64;
        }
    }
    p_bar /= n;
    let p_e: f64 = totals.iter().map(|&t| (t as f64 / (n * r)).powi(2)).sum();
    // p_e reaches 1 only when one category holds every rating.
    let degenerate = totals.iter().filter(|&&t| t > 0).count() < 2;
    Kappa {
        value: (!degenerate).then(|| (p_bar - p_e) / (1.0 - p_e)),
        p_bar,
        p_e,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelKappa {
    pub topic: Topic,
    #[serde(flatten)]
    pub kappa: Kappa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub per_label: Vec<LabelKappa>,
    /// Mean over the non-degenerate labels.
    pub mean_kappa: Option<f64>,
    pub r: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

impl KappaReport {
    pub fn degenerate_topics(&self) -> Vec<Topic> {
        self.per_label
            .iter()
            .filter(|l| l.kappa.is_degenerate())
            .map(|l| l.topic)
            .collect()
    }

    /// `topic,kappa,p_bar,p_e` then a `mean` row; degenerate kappas are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("topic,kappa,p_bar,p_e\n");
        for l in &self.per_label {
            let v = l.kappa.value.map(|v| format!("{v:.6}")).unwrap_or_default();
            out.push_str(&format!("{},{v},{:.6},{:.6}\n", l.topic, l.kappa.p_bar, l.kappa.p_e));
        }
        let mean = self.mean_kappa.map(|v| format!("{v:.6}")).unwrap_or_default();
        out.push_str(&format!("mean,{mean},,\n"));
        out
    }
}

/// One binary matrix per topic (tagged vs not tagged) over every tweet, each
/// rated by the full set of raters seen in `annotations`.
pub fn kappa_report(annotations: &[AnnotationRow]) -> Result<KappaReport> {
    let mut by_tweet: BTreeMap<&str, BTreeMap<&str, &AnnotationRow>> = BTreeMap::new();
    let mut raters: BTreeSet<&str> = BTreeSet::new();
    for a in annotations {
        raters.insert(&a.rater_id);
        if by_tweet.entry(&a.tweet_id).or_default().insert(&a.rater_id, a).is_some() {
            return Err(Error::InvalidArgument(format!(
                "rater '{}' annotated tweet '{}' more than once",
                a.rater_id, a.tweet_id
            )));
        }
    }
    let missing: Vec<(String, String)> = by_tweet
        .iter()
        .flat_map(|(t, rs)| {
            raters
                .iter()
                .filter(|r| !rs.contains_key(*r))
                .map(move |r| (t.to_string(), r.to_string()))
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteRatings { missing });
    }
    let r = raters.len() as u32;
    let mut per_label = Vec::with_capacity(NUM_TOPICS);
    for topic in Topic::ALL {
        let positives: Vec<u32> = by_tweet
            .values()
            .map(|rs| rs.values().filter(|a| a.labels.get(topic)).count() as u32)
            .collect();
        let m = RatingMatrix::binary(r, &positives)?;
        per_label.push(LabelKappa { topic, kappa: fleiss_kappa(&m) });
    }
    let values: Vec<f64> = per_label.iter().filter_map(|l| l.kappa.value).collect();
    Ok(KappaReport {
        mean_kappa: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        per_label,
        r: r as usize,
        n: by_tweet.len(),
    })
}

/// Seeded uniform sample of `n` distinct ids, independent of input order.
pub fn agreement_subset<S: AsRef<str>>(ids: &[S], n: usize, seed: u64) -> Result<Vec<String>> {
    let mut sorted: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    sorted.sort_unstable();
    sorted.dedup();
    if n > sorted.len() {
        return Err(Error::InvalidArgument(format!(
            "subset of {n} requested from {} ids",
            sorted.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sorted.choose_multiple(&mut rng, n).map(|s| s.to_string()).collect())
}
