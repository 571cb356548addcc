//! Durable store for tweets, annotations and the agreement subset.
//!
//! Every change is appended to a JSON-lines event log, one line per
//! transaction, and applied to an in-memory index behind a read-write lock.
//! Opening a store replays the log, so the current view is a deterministic
//! function of the history. A torn final line (crash mid-write) is dropped.

mod trends;
mod types;

pub use trends::{window_start, windows};
pub use types::{
    is_model_rater, model_rater, AgreementSubset, AnnotationRecord, AnnotationStatus, Granularity,
    Page, StoredTweet, TrendBucket, TweetFilter, TweetPage, TweetView, MODEL_RATER_PREFIX,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationRow, DatasetRow};
use crate::error::{Error, Result};
use crate::topics::{Topic, TopicLabels};

/// Upper bound on `Page::limit`.
pub const MAX_PAGE: usize = 1000;
/// Upper bound on the number of windows one trend query may span.
pub const MAX_WINDOWS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Event {
    Tweet { tweet: StoredTweet },
    Annotation { record: AnnotationRecord },
    AgreementSubset { subset: AgreementSubset },
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    seq: u64,
    events: Vec<Event>,
}

#[derive(Clone, Debug)]
struct TweetEntry {
    tweet: StoredTweet,
    /// Current record per rater, with the sequence number that produced it.
    records: BTreeMap<String, (u64, AnnotationRecord)>,
}

impl TweetEntry {
    fn latest(&self, human: bool) -> Option<&(u64, AnnotationRecord)> {
        self.records
            .iter()
            .filter(|(r, _)| is_model_rater(r) != human)
            .map(|(_, v)| v)
            .max_by_key(|(seq, _)| *seq)
    }

    fn effective(&self) -> Option<&AnnotationRecord> {
        self.latest(true).or_else(|| self.latest(false)).map(|(_, r)| r)
    }

    fn status(&self) -> Option<AnnotationStatus> {
        self.records.values().map(|(_, r)| r.status).max()
    }

    fn view(&self) -> TweetView {
        let eff = self.effective();
        TweetView {
            tweet: self.tweet.clone(),
            labels: eff.map(|r| r.labels),
            status: self.status(),
            label_source: eff.map(|r| r.rater_id.clone()),
        }
    }
}

#[derive(Default)]
struct State {
    seq: u64,
    tweets: BTreeMap<String, TweetEntry>,
    history: Vec<AnnotationRecord>,
    agreement: Option<AgreementSubset>,
}

impl State {
    fn apply(&mut self, event: Event) {
        self.seq += 1;
        match event {
            Event::Tweet { tweet } => match self.tweets.get_mut(&tweet.id) {
                Some(e) => e.tweet = tweet,
                None => {
                    self.tweets.insert(
                        tweet.id.clone(),
                        TweetEntry {
                            tweet,
                            records: BTreeMap::new(),
                        },
                    );
                }
            },
            Event::Annotation { record } => {
                let Some(entry) = self.tweets.get_mut(&record.tweet_id) else {
                    log::warn!("annotation for unknown tweet '{}' ignored", record.tweet_id);
                    return;
                };
                entry
                    .records
                    .insert(record.rater_id.clone(), (self.seq, record.clone()));
                self.history.push(record);
            }
            Event::AgreementSubset { subset } => self.agreement = Some(subset),
        }
    }

    fn entry(&self, id: &str) -> Result<&TweetEntry> {
        self.tweets
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("tweet '{id}'")))
    }
}

struct Inner {
    state: State,
    log: Option<(PathBuf, BufWriter<File>)>,
}

impl Inner {
    /// Appends one transaction to the log, then applies it.
    fn commit(&mut self, events: Vec<Event>) -> Result<()> {
        if events.is_empty() {
            return Ok(());
        }
        if let Some((path, w)) = &mut self.log {
            let line = LogLine {
                seq: self.state.seq + 1,
                events,
            };
            let mut json = serde_json::to_string(&line).expect("events serialize");
            json.push('\n');
            w.write_all(json.as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path.as_path(), e))?;
            for e in line.events {
                self.state.apply(e);
            }
        } else {
            for e in events {
                self.state.apply(e);
            }
        }
        Ok(())
    }
}

pub struct Store {
    inner: RwLock<Inner>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store {
            inner: RwLock::new(Inner {
                state: State::default(),
                log: None,
            }),
        }
    }

    /// Opens (creating if needed) a log-backed store and replays its history.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut state = State::default();
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut good_len = 0usize;
            let mut offset = 0usize;
            let lines: Vec<&str> = text.split_inclusive('\n').collect();
            for (i, raw) in lines.iter().enumerate() {
                offset += raw.len();
                let line = raw.trim_end_matches(['\n', '\r']);
                if line.trim().is_empty() {
                    good_len = offset;
                    continue;
                }
                match serde_json::from_str::<LogLine>(line) {
                    Ok(entry) => {
                        for e in entry.events {
                            state.apply(e);
                        }
                        good_len = offset;
                    }
                    Err(e) if i + 1 == lines.len() && !raw.ends_with('\n') => {
                        log::warn!("{}: dropping torn final entry ({e})", path.display());
                    }
                    Err(e) => {
                        return Err(Error::parse(format!("{}:{}", path.display(), i + 1), e));
                    }
                }
            }
            if good_len < text.len() {
                let f = OpenOptions::new()
                    .write(true)
                    .open(&path)
                    .map_err(|e| Error::io(&path, e))?;
                f.set_len(good_len as u64).map_err(|e| Error::io(&path, e))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Store {
            inner: RwLock::new(Inner {
                state,
                log: Some((path, BufWriter::new(file))),
            }),
        })
    }

    fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|p| p.into_inner())
    }

    /// Inserts or replaces tweets in one transaction; unchanged tweets are
    /// skipped. Returns how many were written.
    pub fn upsert_tweets(&self, tweets: Vec<StoredTweet>) -> Result<usize> {
        let mut inner = self.write();
        let mut batch: BTreeMap<String, StoredTweet> = BTreeMap::new();
        for t in tweets {
            if t.id.is_empty() {
                return Err(Error::InvalidArgument("tweet id is empty".into()));
            }
            batch.insert(t.id.clone(), t);
        }
        let events: Vec<Event> = batch
            .into_values()
            .filter(|t| inner.state.tweets.get(&t.id).map(|e| &e.tweet) != Some(t))
            .map(|tweet| Event::Tweet { tweet })
            .collect();
        let n = events.len();
        inner.commit(events)?;
        Ok(n)
    }

    pub fn upsert_tweet(&self, tweet: StoredTweet) -> Result<bool> {
        Ok(self.upsert_tweets(vec![tweet])? == 1)
    }

    pub fn get_tweet(&self, id: &str) -> Option<TweetView> {
        self.read().state.tweets.get(id).map(TweetEntry::view)
    }

    pub fn tweet_count(&self) -> usize {
        self.read().state.tweets.len()
    }

    pub fn all_tweets(&self) -> Vec<StoredTweet> {
        self.read()
            .state
            .tweets
            .values()
            .map(|e| e.tweet.clone())
            .collect()
    }

    /// Newest first (ties by id); `from`/`to` are inclusive; the topic filter
    /// looks at effective labels.
    pub fn query_tweets(&self, filter: &TweetFilter, page: Page) -> Result<TweetPage> {
        check_window(filter.from, filter.to)?;
        if page.limit > MAX_PAGE {
            return Err(Error::InvalidArgument(format!("limit {} exceeds {MAX_PAGE}", page.limit)));
        }
        let inner = self.read();
        let mut hits: Vec<&TweetEntry> = inner
            .state
            .tweets
            .values()
            .filter(|e| filter.from.is_none_or(|f| e.tweet.created_at >= f))
            .filter(|e| filter.to.is_none_or(|t| e.tweet.created_at <= t))
            .filter(|e| filter.status.is_none_or(|s| e.status() == Some(s)))
            .filter(|e| {
                filter
                    .topic
                    .is_none_or(|t| e.effective().is_some_and(|r| r.labels.get(t)))
            })
            .collect();
        hits.sort_by(|a, b| {
            b.tweet
                .created_at
                .cmp(&a.tweet.created_at)
                .then_with(|| a.tweet.id.cmp(&b.tweet.id))
        });
        Ok(TweetPage {
            total: hits.len(),
            offset: page.offset,
            items: hits
                .into_iter()
                .skip(page.offset)
                .take(page.limit)
                .map(TweetEntry::view)
                .collect(),
        })
    }

    /// Records a human label set for `(tweet_id, rater_id)`.
    ///
    /// The record becomes (or stays) `human_validated`. Resubmitting the
    /// current labels writes nothing. Proofread records are final.
    pub fn record_correction(
        &self,
        tweet_id: &str,
        rater_id: &str,
        labels: TopicLabels,
        now: DateTime<Utc>,
    ) -> Result<AnnotationRecord> {
        if rater_id.is_empty() || is_model_rater(rater_id) {
            return Err(Error::InvalidArgument(format!(
                "rater id '{rater_id}' is reserved or empty"
            )));
        }
        let mut inner = self.write();
        let entry = inner.state.entry(tweet_id)?;
        if let Some((_, cur)) = entry.records.get(rater_id) {
            if cur.status == AnnotationStatus::Proofread {
                return Err(Error::InvalidTransition(format!(
                    "record ({tweet_id}, {rater_id}) is proofread and cannot be corrected"
                )));
            }
            if cur.labels == labels {
                return Ok(cur.clone());
            }
        }
        let record = AnnotationRecord {
            tweet_id: tweet_id.into(),
            rater_id: rater_id.into(),
            labels,
            status: AnnotationStatus::HumanValidated,
            updated_at: now,
        };
        inner.commit(vec![Event::Annotation {
            record: record.clone(),
        }])?;
        Ok(record)
    }

    /// Moves a `human_validated` record to `proofread`; repeating is a no-op.
    pub fn proofread(&self, tweet_id: &str, rater_id: &str, now: DateTime<Utc>) -> Result<AnnotationRecord> {
        let mut inner = self.write();
        let entry = inner.state.entry(tweet_id)?;
        let (_, cur) = entry
            .records
            .get(rater_id)
            .ok_or_else(|| Error::NotFound(format!("no record by '{rater_id}' for tweet '{tweet_id}'")))?;
        match cur.status {
            AnnotationStatus::Proofread => return Ok(cur.clone()),
            AnnotationStatus::ModelPredicted => {
                return Err(Error::InvalidTransition(format!(
                    "record ({tweet_id}, {rater_id}) must be human_validated before proofreading"
                )))
            }
            AnnotationStatus::HumanValidated => {}
        }
        let record = AnnotationRecord {
            status: AnnotationStatus::Proofread,
            updated_at: now,
            ..cur.clone()
        };
        inner.commit(vec![Event::Annotation {
            record: record.clone(),
        }])?;
        Ok(record)
    }

    /// Stores model predictions in one transaction under `model:<version>`.
    /// Predictions identical to the current record for that rater are skipped.
    pub fn record_predictions(
        &self,
        version: &str,
        predictions: &[(String, TopicLabels)],
        now: DateTime<Utc>,
    ) -> Result<usize> {
        let rater = model_rater(version);
        let mut inner = self.write();
        let mut events = Vec::new();
        for (id, labels) in predictions {
            let entry = inner.state.entry(id)?;
            if entry.records.get(&rater).is_some_and(|(_, r)| r.labels == *labels) {
                continue;
            }
            events.push(Event::Annotation {
                record: AnnotationRecord {
                    tweet_id: id.clone(),
                    rater_id: rater.clone(),
                    labels: *labels,
                    status: AnnotationStatus::ModelPredicted,
                    updated_at: now,
                },
            });
        }
        let n = events.len();
        inner.commit(events)?;
        Ok(n)
    }

    /// Tweets without any human record whose latest prediction is missing or
    /// from a different model version.
    pub fn stale_predictions(&self, version: &str) -> Vec<StoredTweet> {
        let rater = model_rater(version);
        self.read()
            .state
            .tweets
            .values()
            .filter(|e| e.latest(true).is_none())
            .filter(|e| e.latest(false).is_none_or(|(_, r)| r.rater_id != rater))
            .map(|e| e.tweet.clone())
            .collect()
    }

    /// Latest human labels per tweet, for supervision. Model predictions
    /// never appear here.
    pub fn human_labeled(&self) -> Vec<(StoredTweet, AnnotationRecord)> {
        self.read()
            .state
            .tweets
            .values()
            .filter_map(|e| e.latest(true).map(|(_, r)| (e.tweet.clone(), r.clone())))
            .collect()
    }

    pub fn current_records(&self, tweet_id: &str) -> Result<Vec<AnnotationRecord>> {
        let inner = self.read();
        let entry = inner.state.entry(tweet_id)?;
        Ok(entry.records.values().map(|(_, r)| r.clone()).collect())
    }

    pub fn history(&self, tweet_id: &str) -> Vec<AnnotationRecord> {
        self.read()
            .state
            .history
            .iter()
            .filter(|r| r.tweet_id == tweet_id)
            .cloned()
            .collect()
    }

    pub fn history_len(&self) -> usize {
        self.read().state.history.len()
    }

    /// Dense per-topic counts over every window from `from` to `to`
    /// (inclusive), ordered by window then topic.
    pub fn trend_series(
        &self,
        granularity: Granularity,
        topic: Option<Topic>,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Result<Vec<TrendBucket>> {
        check_window(Some(from), Some(to))?;
        let span = (to - from).num_days() / if granularity == Granularity::Week { 7 } else { 1 };
        if span as usize > MAX_WINDOWS {
            return Err(Error::InvalidArgument(format!("window spans more than {MAX_WINDOWS} buckets")));
        }
        let starts = windows(from, to, granularity);
        let topics: Vec<Topic> = topic.map_or_else(|| Topic::ALL.to_vec(), |t| vec![t]);
        let mut counts: BTreeMap<(DateTime<Utc>, usize), u64> = BTreeMap::new();
        let inner = self.read();
        for e in inner.state.tweets.values() {
            let t = e.tweet.created_at;
            if t < from || t > to {
                continue;
            }
            let Some(rec) = e.effective() else { continue };
            let w = window_start(t, granularity);
            for &topic in &topics {
                if rec.labels.get(topic) {
                    *counts.entry((w, topic.index())).or_default() += 1;
                }
            }
        }
        Ok(starts
            .into_iter()
            .flat_map(|w| {
                let counts = &counts;
                topics.iter().map(move |&topic| TrendBucket {
                    window_start: w,
                    granularity,
                    topic,
                    count: counts.get(&(w, topic.index())).copied().unwrap_or(0),
                })
            })
            .collect())
    }

    /// Persists the subset every rater annotates. All ids must exist.
    pub fn set_agreement_subset(&self, subset: AgreementSubset) -> Result<()> {
        let mut inner = self.write();
        if let Some(id) = subset.ids.iter().find(|id| !inner.state.tweets.contains_key(*id)) {
            return Err(Error::NotFound(format!("tweet '{id}'")));
        }
        let distinct: BTreeSet<&String> = subset.ids.iter().collect();
        if distinct.len() != subset.ids.len() {
            return Err(Error::InvalidArgument("agreement subset has duplicate ids".into()));
        }
        inner.commit(vec![Event::AgreementSubset { subset }])
    }

    pub fn agreement_subset(&self) -> Option<AgreementSubset> {
        self.read().state.agreement.clone()
    }

    /// Human ratings on the agreement subset, one row per (tweet, rater).
    ///
    /// Every subset tweet must be rated by every rater that rated any of them;
    /// otherwise the missing pairs are returned as an error.
    pub fn agreement_ratings(&self) -> Result<Vec<AnnotationRow>> {
        let inner = self.read();
        let subset = inner
            .state
            .agreement
            .as_ref()
            .ok_or_else(|| Error::NotFound("no agreement subset has been drawn".into()))?;
        let mut rows = Vec::new();
        let mut raters = BTreeSet::new();
        for id in &subset.ids {
            for (rater, (_, rec)) in &inner.state.entry(id)?.records {
                if !is_model_rater(rater) {
                    raters.insert(rater.clone());
                    rows.push(AnnotationRow {
                        tweet_id: id.clone(),
                        rater_id: rater.clone(),
                        labels: rec.labels,
                    });
                }
            }
        }
        if raters.is_empty() {
            return Err(Error::NotFound("agreement subset has no human ratings yet".into()));
        }
        let have: BTreeSet<(&str, &str)> =
            rows.iter().map(|r| (r.tweet_id.as_str(), r.rater_id.as_str())).collect();
        let missing: Vec<(String, String)> = subset
            .ids
            .iter()
            .flat_map(|t| raters.iter().map(move |r| (t.clone(), r.clone())))
            .filter(|(t, r)| !have.contains(&(t.as_str(), r.as_str())))
            .collect();
        if !missing.is_empty() {
            return Err(Error::IncompleteRatings { missing });
        }
        Ok(rows)
    }

    /// Whole corpus with effective labels (all zero when unlabeled) and the
    /// tweet-level status, ordered by id.
    pub fn export_rows(&self) -> Vec<DatasetRow> {
        self.read()
            .state
            .tweets
            .values()
            .map(|e| DatasetRow {
                tweet_id: e.tweet.id.clone(),
                created_at: e.tweet.created_at,
                text: e.tweet.text.clone(),
                labels: e.effective().map(|r| r.labels).unwrap_or_default(),
                status: Some(e.status().map_or("unlabeled", AnnotationStatus::as_str).to_string()),
            })
            .collect()
    }

    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<usize> {
        let rows = self.export_rows();
        crate::dataset::write_dataset_csv(path, &rows)?;
        Ok(rows.len())
    }
}

fn check_window(from: Option<DateTime<Utc>>, to: Option<DateTime<Utc>>) -> Result<()> {
    match (from, to) {
        (Some(f), Some(t)) if f > t => Err(Error::InvalidArgument(format!(
            "window start {f} is after end {t}"
        ))),
        _ => Ok(()),
    }
}
