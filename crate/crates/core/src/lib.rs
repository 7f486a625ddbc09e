//! Conversation-level decoding.
//!
//! A self speaker's next utterance is chosen by unrolling each
//! utterance-level candidate through several future turns under a model of
//! the partner, then keeping the candidate whose future is most likely.
//! Speaker models are pluggable; table and n-gram models are included, and
//! [`oracle`] provides exhaustive reference answers on tiny instances.

pub mod conversation;
pub mod corpus;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod model;
pub mod multiturn;
pub mod oracle;
pub mod rollout;
pub mod search;
pub mod vocab;

pub use conversation::{Context, Conversation, SpeakerRole, Utterance};
pub use error::{Error, Result};
pub use model::{
    conversation_logprob, fit_ngram, utterance_logprob, CountingModel, NGramConfig, NGramModel, SpeakerModel,
    TabularModel,
};
pub use multiturn::{
    make_partner, multi_turn_search, HypothesisSet, MultiTurnParams, PartnerKind, PartnerModel, ScoredSequence,
    SearchTrace, SelfSide,
};
pub use search::{
    beam_search, greedy_search, iterative_beam_search, ScoredUtterance, SearchParams, Turn, UtteranceAlgorithm,
};
pub use vocab::{Token, Vocabulary};
