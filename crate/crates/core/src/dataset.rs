//! Labeled dataset and annotation CSV files.
//!
//! Topic columns are named `topic_1..topic_8` and hold 0/1. A sidecar JSON
//! file next to each dataset CSV maps column names to topic names; readers
//! honor it when present and otherwise assume the canonical topic order.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureVector};
use crate::topics::{Topic, TopicLabels, NUM_TOPICS};

/// One training or evaluation example with precomputed features.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub id: String,
    pub features: FeatureVector,
    pub labels: TopicLabels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub tweet_id: String,
    pub created_at: DateTime<Utc>,
    pub text: String,
    pub labels: TopicLabels,
    /// Annotation status; only present in store exports.
    pub status: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub tweet_id: String,
    pub rater_id: String,
    pub labels: TopicLabels,
}

pub fn topic_column(topic: Topic) -> String {
    format!("topic_{}", topic.index() + 1)
}

pub fn topic_columns() -> Vec<String> {
    Topic::ALL.iter().map(|&t| topic_column(t)).collect()
}

/// `data.csv` -> `data.csv.topics.json`
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".topics.json");
    PathBuf::from(name)
}

fn canonical_mapping() -> BTreeMap<String, Topic> {
    Topic::ALL.iter().map(|&t| (topic_column(t), t)).collect()
}

fn read_mapping(csv_path: &Path) -> Result<BTreeMap<String, Topic>> {
    let side = sidecar_path(csv_path);
    if !side.exists() {
        return Ok(canonical_mapping());
    }
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let map: BTreeMap<String, Topic> =
        serde_json::from_str(&text).map_err(|e| Error::parse(side.display().to_string(), e))?;
    let mut seen = [false; NUM_TOPICS];
    for t in map.values() {
        seen[t.index()] = true;
    }
    if map.len() != NUM_TOPICS || seen.contains(&false) {
        return Err(Error::parse(
            side.display().to_string(),
            "mapping must name each of the 8 topics exactly once",
        ));
    }
    Ok(map)
}

fn write_mapping(csv_path: &Path) -> Result<()> {
    let side = sidecar_path(csv_path);
    let json = serde_json::to_string_pretty(&canonical_mapping()).expect("mapping serializes");
    std::fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
}

fn bit(field: &str, loc: impl Fn() -> String) -> Result<bool> {
    match field.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::parse(loc(), format!("expected 0 or 1, got '{other}'"))),
    }
}

struct Columns {
    index: BTreeMap<String, usize>,
    topics: Vec<(usize, Topic)>,
}

impl Columns {
    fn new(headers: &csv::StringRecord, mapping: &BTreeMap<String, Topic>, path: &Path) -> Result<Self> {
        let index: BTreeMap<String, usize> =
            headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
        let mut topics = Vec::new();
        for (col, &t) in mapping {
            let i = *index.get(col).ok_or_else(|| {
                Error::parse(path.display().to_string(), format!("missing column '{col}' ({t})"))
            })?;
            topics.push((i, t));
        }
        Ok(Columns { index, topics })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, name: &str, loc: &dyn Fn() -> String) -> Result<&'r str> {
        self.index
            .get(name)
            .and_then(|&i| rec.get(i))
            .ok_or_else(|| Error::parse(loc(), format!("missing field '{name}'")))
    }

    fn labels(&self, rec: &csv::StringRecord, loc: &dyn Fn() -> String) -> Result<TopicLabels> {
        let mut labels = TopicLabels::empty();
        for &(i, t) in &self.topics {
            let f = rec.get(i).ok_or_else(|| Error::parse(loc(), "short row"))?;
            labels.set(t, bit(f, loc)?);
        }
        Ok(labels)
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(false).from_reader(file))
}

pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>> {
    let path = path.as_ref();
    let mapping = read_mapping(path)?;
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), e))?
        .clone();
    let cols = Columns::new(&headers, &mapping, path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let loc = || format!("{}:{}", path.display(), i + 2);
        let rec = rec.map_err(|e| Error::parse(loc(), e))?;
        let created = cols.get(&rec, "created_at", &loc)?;
        let created_at = DateTime::parse_from_rfc3339(created.trim())
            .map_err(|e| Error::parse(loc(), format!("created_at '{created}': {e}")))?
            .with_timezone(&Utc);
        rows.push(DatasetRow {
            tweet_id: cols.get(&rec, "tweet_id", &loc)?.to_string(),
            created_at,
            text: cols.get(&rec, "text", &loc)?.to_string(),
            labels: cols.labels(&rec, &loc)?,
            status: cols.get(&rec, "status", &loc).ok().map(str::to_string),
        });
    }
    Ok(rows)
}

/// Writes the CSV plus its topic-mapping sidecar. A `status` column is added
/// when any row carries one.
pub fn write_dataset_csv(path: impl AsRef<Path>, rows: &[DatasetRow]) -> Result<()> {
    let path = path.as_ref();
    let with_status = rows.iter().any(|r| r.status.is_some());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut header = vec!["tweet_id".to_string(), "created_at".into(), "text".into()];
    header.extend(topic_columns());
    if with_status {
        header.push("status".into());
    }
    let io = |e: csv::Error| Error::parse(path.display().to_string(), e);
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![
            r.tweet_id.clone(),
            r.created_at.to_rfc3339_opts(SecondsFormat::Secs, true),
            r.text.clone(),
        ];
        rec.extend(r.labels.0.iter().map(|b| if *b { "1" } else { "0" }.to_string()));
        if with_status {
            rec.push(r.status.clone().unwrap_or_default());
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_mapping(path)
}

/// `tweet_id,rater_id,topic_1..topic_8`
pub fn read_annotations_csv(path: impl AsRef<Path>) -> Result<Vec<AnnotationRow>> {
    let path = path.as_ref();
    let mapping = read_mapping(path)?;
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), e))?
        .clone();
    let cols = Columns::new(&headers, &mapping, path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let loc = || format!("{}:{}", path.display(), i + 2);
        let rec = rec.map_err(|e| Error::parse(loc(), e))?;
        rows.push(AnnotationRow {
            tweet_id: cols.get(&rec, "tweet_id", &loc)?.trim().to_string(),
            rater_id: cols.get(&rec, "rater_id", &loc)?.trim().to_string(),
            labels: cols.labels(&rec, &loc)?,
        });
    }
    Ok(rows)
}

pub fn write_annotations_csv(path: impl AsRef<Path>, rows: &[AnnotationRow]) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| Error::parse(path.display().to_string(), e);
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["tweet_id".to_string(), "rater_id".into()];
    header.extend(topic_columns());
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.tweet_id.clone(), r.rater_id.clone()];
        rec.extend(r.labels.0.iter().map(|b| if *b { "1" } else { "0" }.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Computes features for every row; ids must be unique.
pub fn to_examples(rows: &[DatasetRow], extractor: &dyn FeatureExtractor) -> Result<Vec<LabeledExample>> {
    let mut seen = std::collections::HashSet::new();
    rows.iter()
        .map(|r| {
            if !seen.insert(r.tweet_id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate tweet id '{}'", r.tweet_id)));
            }
            Ok(LabeledExample {
                id: r.tweet_id.clone(),
                features: extractor.features(&r.tweet_id, &r.text)?,
                labels: r.labels,
            })
        })
        .collect()
}
