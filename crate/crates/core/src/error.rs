use thiserror::Error;

use crate::conversation::SpeakerRole;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("token id {id} is outside a vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },

    #[error("unknown tokens: {}", .0.join(", "))]
    OutOfVocabulary(Vec<String>),

    #[error("invalid utterance: {0}")]
    Utterance(String),

    #[error("invalid conversation: {0}")]
    Conversation(String),

    #[error("expected {expected:?} to speak next, history has {history_len} utterances")]
    WrongSpeaker {
        expected: SpeakerRole,
        history_len: usize,
    },

    #[error("vocabulary mismatch between {0}")]
    VocabularyMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("unknown context `{0}`")]
    UnknownContext(String),

    #[error("invalid search parameters: {0}")]
    Params(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error("enumeration needs {required} sequences, cap is {cap}")]
    EnumerationCap { required: u128, cap: u128 },

    #[error("ingestion error at line {line}: {message}")]
    Ingestion { line: usize, message: String },

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
