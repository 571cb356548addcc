use std::path::PathBuf;

use crate::topics::Topic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "topic '{topic}' has {pos} positive and {neg} negative examples; \
         the log-odds bias is undefined, apply add-one smoothing (LabelStats::add_one) first"
    )]
    ZeroLabelCount { topic: Topic, pos: u64, neg: u64 },

    #[error("no positive examples in ground truth; AUPR is undefined")]
    NoPositives,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("incomplete ratings: {} missing (tweet, rater) pair(s), first: {:?}", missing.len(), missing.first())]
    IncompleteRatings { missing: Vec<(String, String)> },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid status transition: {0}")]
    InvalidTransition(String),

    #[error(transparent)]
    TrainingAborted(Box<crate::optim::TrainAborted>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }
}
