//! Shared service state: the store, the serving model and the retrain jobs.
//!
//! The serving model sits behind a read-write lock. Handlers that return
//! labels hold the read side while they query the store, and a retrain holds
//! the write side while it records the new model's predictions and swaps the
//! snapshot. A response therefore never mixes predictions from two versions.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use tweettopic::classifier::{load_snapshot, save_snapshot, Scorer};
use tweettopic::features::{FeatureExtractor, HashedNgrams};
use tweettopic::ingest::{dedupe, keyword_filter, FileSource, TweetSource};
use tweettopic::metrics::{evaluate_snapshot, fit};
use tweettopic::preprocess::preprocess_pipeline;
use tweettopic::store::StoredTweet;
use tweettopic::{
    Error, EvalReport, ExtractorKind, KeywordSet, LabeledExample, ModelSnapshot, Result, Store, TopicLabels,
};

use crate::config::AppConfig;

pub fn now() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(0)
}

/// Evaluation of the serving model on the human labels it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model_version: String,
    pub evaluated_on: String,
    pub computed_at: DateTime<Utc>,
    pub report: EvalReport,
}

pub struct Serving {
    pub snapshot: Arc<ModelSnapshot>,
    pub metrics: Option<Arc<ModelMetrics>>,
    extractor: HashedNgrams,
    scorer: Scorer,
}

impl Serving {
    pub fn new(snapshot: ModelSnapshot, metrics: Option<ModelMetrics>) -> Result<Self> {
        if snapshot.extractor.kind != ExtractorKind::HashedNgrams {
            return Err(Error::Config(format!(
                "model '{}' uses imported embeddings and cannot label new text",
                snapshot.version
            )));
        }
        let extractor = HashedNgrams::new(snapshot.extractor.clone())?;
        let scorer = snapshot.scorer();
        Ok(Serving {
            snapshot: Arc::new(snapshot),
            metrics: metrics.map(Arc::new),
            extractor,
            scorer,
        })
    }

    pub fn version(&self) -> &str {
        &self.snapshot.version
    }

    pub fn predict(&self, tweets: &[StoredTweet]) -> Result<Vec<(String, TopicLabels)>> {
        tweets
            .iter()
            .map(|t| {
                let x = self.extractor.features(&t.id, &t.text)?;
                let probs = self.scorer.probabilities(&x)?;
                Ok((t.id.clone(), self.snapshot.decide(&probs)))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainJob {
    pub job_id: u64,
    pub state: JobState,
    pub created_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub snapshot_version: Option<String>,
    pub training_examples: Option<usize>,
    pub repredicted: Option<usize>,
    pub error: Option<String>,
}

#[derive(Default)]
struct Jobs {
    next_id: u64,
    all: BTreeMap<u64, RetrainJob>,
    active: Option<u64>,
}

/// Counts returned by an ingest run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub fetched: usize,
    pub duplicates: usize,
    pub filtered_out: usize,
    pub too_short: usize,
    pub written: usize,
    pub predicted: usize,
}

pub struct AppState {
    pub store: Store,
    pub config: AppConfig,
    serving: RwLock<Option<Serving>>,
    jobs: Mutex<Jobs>,
}

fn metrics_path(model_path: &Path) -> std::path::PathBuf {
    let mut s = model_path.as_os_str().to_owned();
    s.push(".metrics.json");
    s.into()
}

impl AppState {
    /// Builds the state and labels every tweet that lacks a prediction from
    /// the serving model.
    pub fn new(config: AppConfig, store: Store, snapshot: Option<ModelSnapshot>) -> Result<Self> {
        Self::with_metrics(config, store, snapshot, None)
    }

    fn with_metrics(
        config: AppConfig,
        store: Store,
        snapshot: Option<ModelSnapshot>,
        metrics: Option<ModelMetrics>,
    ) -> Result<Self> {
        let serving = snapshot.map(|s| Serving::new(s, metrics)).transpose()?;
        if let Some(s) = &serving {
            let stale = store.stale_predictions(s.version());
            if !stale.is_empty() {
                let n = store.record_predictions(s.version(), &s.predict(&stale)?, now())?;
                log::info!("labeled {n} tweet(s) with model {}", s.version());
            }
        }
        Ok(AppState {
            store,
            config,
            serving: RwLock::new(serving),
            jobs: Mutex::new(Jobs { next_id: 1, ..Jobs::default() }),
        })
    }

    /// Opens the store and the model named in the config.
    pub fn open(config: AppConfig) -> Result<Self> {
        let store = Store::open(&config.store_path)?;
        let (snapshot, metrics) = match &config.model_path {
            Some(p) if p.exists() => {
                let snap = load_snapshot(p)?;
                let metrics = match std::fs::read_to_string(metrics_path(p)) {
                    Ok(s) => serde_json::from_str::<ModelMetrics>(&s)
                        .ok()
                        .filter(|m| m.model_version == snap.version),
                    Err(_) => None,
                };
                log::info!("serving model {} from {}", snap.version, p.display());
                (Some(snap), metrics)
            }
            _ => (None, None),
        };
        Self::with_metrics(config, store, snapshot, metrics)
    }

    pub fn serving(&self) -> RwLockReadGuard<'_, Option<Serving>> {
        self.serving.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn model_version(&self) -> Option<String> {
        self.serving().as_ref().map(|s| s.version().to_string())
    }

    pub fn job(&self, id: u64) -> Option<RetrainJob> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).all.get(&id).cloned()
    }

    pub fn jobs(&self) -> Vec<RetrainJob> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).all.values().cloned().collect()
    }

    /// Registers a queued job, or returns the active one as the error.
    pub fn enqueue_retrain(&self) -> std::result::Result<RetrainJob, RetrainJob> {
        let mut jobs = self.jobs.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(active) = jobs.active {
            return Err(jobs.all[&active].clone());
        }
        let id = jobs.next_id;
        jobs.next_id += 1;
        let job = RetrainJob {
            job_id: id,
            state: JobState::Queued,
            created_at: now(),
            started_at: None,
            finished_at: None,
            snapshot_version: None,
            training_examples: None,
            repredicted: None,
            error: None,
        };
        jobs.all.insert(id, job.clone());
        jobs.active = Some(id);
        Ok(job)
    }

    fn update_job(&self, id: u64, f: impl FnOnce(&mut RetrainJob)) {
        let mut jobs = self.jobs.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(job) = jobs.all.get_mut(&id) {
            f(job);
            if matches!(job.state, JobState::Succeeded | JobState::Failed) {
                jobs.active = None;
            }
        }
    }

    /// Runs a queued job to completion on the calling thread.
    pub fn run_retrain(&self, id: u64) {
        self.update_job(id, |j| {
            j.state = JobState::Running;
            j.started_at = Some(now());
        });
        let result = self.retrain();
        self.update_job(id, |j| {
            j.finished_at = Some(now());
            match result {
                Ok(done) => {
                    j.state = JobState::Succeeded;
                    j.snapshot_version = Some(done.version);
                    j.training_examples = Some(done.examples);
                    j.repredicted = Some(done.repredicted);
                }
                Err(e) => {
                    j.state = JobState::Failed;
                    j.error = Some(e.to_string());
                }
            }
        });
    }

    /// Trains on human labels only, then swaps the serving model.
    fn retrain(&self) -> Result<RetrainDone> {
        let human = self.store.human_labeled();
        if human.is_empty() {
            return Err(Error::InvalidArgument(
                "insufficient supervision: no human_validated or proofread labels".into(),
            ));
        }
        let extractor = HashedNgrams::new(self.config.extractor.clone())?;
        let examples: Vec<LabeledExample> = human
            .iter()
            .map(|(t, r)| {
                Ok(LabeledExample {
                    id: t.id.clone(),
                    features: extractor.features(&t.id, &t.text)?,
                    labels: r.labels,
                })
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&LabeledExample> = examples.iter().collect();
        let mut snapshot = fit(&refs, &self.config.extractor, &self.config.train)?;
        snapshot.version = format!(
            "r{}-{}",
            Utc::now().format("%Y%m%d%H%M%S"),
            &snapshot.trained_on[..snapshot.trained_on.len().min(8)]
        );
        let report = evaluate_snapshot(&snapshot, examples.iter().map(|e| (&e.features, &e.labels)))?;
        let metrics = ModelMetrics {
            model_version: snapshot.version.clone(),
            evaluated_on: "human_labeled_training_set".into(),
            computed_at: now(),
            report,
        };
        if let Some(path) = &self.config.model_path {
            persist(&snapshot, &metrics, path)?;
        }
        let next = Serving::new(snapshot, Some(metrics))?;
        let version = next.version().to_string();

        // Label most tweets before taking the lock; readers keep the old model meanwhile.
        let stale = self.store.stale_predictions(&version);
        let mut predictions = next.predict(&stale)?;
        let mut guard = self.serving.write().unwrap_or_else(|e| e.into_inner());
        let done: std::collections::HashSet<&str> = predictions.iter().map(|p| p.0.as_str()).collect();
        let late: Vec<StoredTweet> = self
            .store
            .stale_predictions(&version)
            .into_iter()
            .filter(|t| !done.contains(t.id.as_str()))
            .collect();
        predictions.extend(next.predict(&late)?);
        let repredicted = self.store.record_predictions(&version, &predictions, now())?;
        *guard = Some(next);
        drop(guard);
        log::info!("retrained on {} example(s); serving {version}", examples.len());
        Ok(RetrainDone {
            version,
            examples: examples.len(),
            repredicted,
        })
    }

    /// Pulls from the configured JSONL source, filters, cleans, stores and
    /// labels new tweets with the serving model.
    pub fn ingest(&self, since: DateTime<Utc>) -> Result<IngestSummary> {
        let (Some(source), Some(kw_path)) = (&self.config.source_path, &self.config.keyword_file) else {
            return Err(Error::Config("source_path and keyword_file must both be configured".into()));
        };
        let keywords = KeywordSet::load(kw_path)?;
        let mut summary = IngestSummary::default();
        let fetched = FileSource::new(source).fetch(since)?;
        summary.fetched = fetched.len();
        let (unique, dups) = dedupe(fetched);
        summary.duplicates = dups;
        let mut clean = Vec::new();
        for t in unique {
            if !keyword_filter(&t, &keywords, &self.config.lang) {
                summary.filtered_out += 1;
                continue;
            }
            match preprocess_pipeline(&t) {
                Some(c) => clean.push(StoredTweet {
                    id: c.id,
                    created_at: c.created_at,
                    text: c.text,
                    source: t.source_name,
                }),
                None => summary.too_short += 1,
            }
        }
        let serving = self.serving();
        summary.written = self.store.upsert_tweets(clean)?;
        if let Some(s) = serving.as_ref() {
            let stale = self.store.stale_predictions(s.version());
            summary.predicted = self.store.record_predictions(s.version(), &s.predict(&stale)?, now())?;
        }
        Ok(summary)
    }
}

struct RetrainDone {
    version: String,
    examples: usize,
    repredicted: usize,
}

/// Writes to a temporary sibling first so a crash never leaves a torn model.
fn persist(snapshot: &ModelSnapshot, metrics: &ModelMetrics, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    save_snapshot(snapshot, &tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let json = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    let mpath = metrics_path(path);
    std::fs::write(&mpath, json).map_err(|e| Error::Config(format!("{}: {e}", mpath.display())))
}
