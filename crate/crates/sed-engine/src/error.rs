use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("all weights are zero, nothing to normalize")]
    AllZero,
    #[error("negative weight {weight} at index {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("question {0:?} is not in the answer key")]
    UnknownQuestion(String),
    #[error("token {0:?} required by the evaluation template is missing from the judge vocabulary")]
    TemplateTokenMissing(String),
    #[error("no generator models supplied")]
    NoGenerators,
    #[error("path enumeration exceeded the cap of {cap} paths")]
    StateSpaceTooLarge { cap: usize },
    #[error("malformed {kind} file: {detail}")]
    Format { kind: &'static str, detail: String },
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
