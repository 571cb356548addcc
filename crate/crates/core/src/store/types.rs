use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::topics::{Topic, TopicLabels};

pub const MODEL_RATER_PREFIX: &str = "model:";

pub fn model_rater(version: &str) -> String {
    format!("{MODEL_RATER_PREFIX}{version}")
}

pub fn is_model_rater(rater_id: &str) -> bool {
    rater_id.starts_with(MODEL_RATER_PREFIX)
}

/// Ordered: statuses only ever move to a larger value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationStatus {
    ModelPredicted,
    HumanValidated,
    Proofread,
}

impl AnnotationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AnnotationStatus::ModelPredicted => "model_predicted",
            AnnotationStatus::HumanValidated => "human_validated",
            AnnotationStatus::Proofread => "proofread",
        }
    }
}

impl std::str::FromStr for AnnotationStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "model_predicted" => Ok(AnnotationStatus::ModelPredicted),
            "human_validated" => Ok(AnnotationStatus::HumanValidated),
            "proofread" => Ok(AnnotationStatus::Proofread),
            other => Err(format!(
                "unknown status '{other}'; expected model_predicted, human_validated or proofread"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredTweet {
    pub id: String,
    pub created_at: DateTime<Utc>,
    /// Preprocessed text.
    pub text: String,
    #[serde(default)]
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub tweet_id: String,
    pub rater_id: String,
    pub labels: TopicLabels,
    pub status: AnnotationStatus,
    pub updated_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementSubset {
    pub ids: Vec<String>,
    pub seed: u64,
    pub created_at: DateTime<Utc>,
}

/// A tweet with its current effective labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweetView {
    #[serde(flatten)]
    pub tweet: StoredTweet,
    pub labels: Option<TopicLabels>,
    /// Highest status among the tweet's records; `None` when unlabeled.
    pub status: Option<AnnotationStatus>,
    /// Rater whose record supplies `labels`.
    pub label_source: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetFilter {
    pub topic: Option<Topic>,
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
    pub status: Option<AnnotationStatus>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub offset: usize,
    pub limit: usize,
}

impl Default for Page {
    fn default() -> Self {
        Page { offset: 0, limit: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweetPage {
    pub total: usize,
    pub offset: usize,
    pub items: Vec<TweetView>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Day,
    Week,
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "day" => Ok(Granularity::Day),
            "week" => Ok(Granularity::Week),
            other => Err(format!("unknown granularity '{other}'; expected day or week")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendBucket {
    pub window_start: DateTime<Utc>,
    pub granularity: Granularity,
    pub topic: Topic,
    pub count: u64,
}
