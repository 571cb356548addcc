//! Topic classification for COVID-19 related tweets written in Devanagari script.
//!
//! The crate covers the whole offline pipeline:
//!
//! * [`ingest`]: JSONL loading, keyword and language filtering, deduplication.
//! * [`preprocess`]: the five ordered cleaning steps and the length gate.
//! * [`features`]: hashed character n-gram extraction and imported embeddings.
//! * [`classifier`]: batch-norm, dropout and linear multi-label head with
//!   prevalence-matched bias initialization, plus the snapshot file format.
//! * [`optim`]: AdamW, warmup + polynomial-decay schedule and the training loop.
//! * [`metrics`]: F1, precision-recall curves, k-fold cross-validation and the
//!   data-size ablation.
//! * [`agreement`]: per-topic Fleiss' kappa.
//! * [`store`]: append-only persistence for tweets, annotations and trends.
//! * [`dataset`]: labeled CSV files; [`synth`]: planted-keyword test corpora.

pub mod agreement;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod features;
pub mod ingest;
pub mod metrics;
pub mod optim;
pub mod preprocess;
pub mod store;
pub mod synth;
pub mod topics;

pub use classifier::{LabelStats, ModelSnapshot};
pub use error::{Error, Result};
pub use features::{ExtractorConfig, ExtractorKind, FeatureVector};
pub use ingest::{KeywordSet, RawTweet};
pub use agreement::{KappaReport, RatingMatrix};
pub use dataset::LabeledExample;
pub use metrics::{CvReport, EvalReport, FoldPlan, PrCurve};
pub use optim::TrainConfig;
pub use preprocess::CleanTweet;
pub use store::{AnnotationRecord, AnnotationStatus, Store, TrendBucket};
pub use topics::{Topic, TopicLabels, NUM_TOPICS};
