use std::path::PathBuf;

use crate::record::RecordError;
use crate::services::ServiceError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Record(#[from] RecordError),

    #[error(transparent)]
    Service(#[from] ServiceError),

    #[error("classification failed for {question:?}: {reason}")]
    Classification { question: String, reason: String },

    #[error("hint generation failed: {0}")]
    Generation(String),

    #[error("candidate generation failed: {0}")]
    CandidateGeneration(String),

    #[error("judgement failed for candidate {candidate:?}: response {response:?}")]
    Judgement { candidate: String, response: String },

    #[error("similarity undefined: {0}")]
    UndefinedSimilarity(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("entity extraction failed: {0}")]
    Extraction(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
