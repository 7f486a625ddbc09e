//! Engine configuration as sent by clients, and its resolution against
//! the model registry.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use turnbeam_core::conversation::{Context, Conversation, SpeakerRole, Utterance};
use turnbeam_core::multiturn::{make_partner, multi_turn_search, MultiTurnParams, PartnerKind, SelfSide};
use turnbeam_core::{ScoredUtterance, SearchTrace, SpeakerModel, UtteranceAlgorithm, Vocabulary};

use crate::error::{ServiceError, ServiceResult};
use crate::registry::{LoadedModel, Registry};

fn default_partner() -> PartnerKind {
    PartnerKind::Egocentric
}

fn default_algorithm() -> UtteranceAlgorithm {
    UtteranceAlgorithm::Beam
}

fn default_width() -> i64 {
    10
}

fn default_lookahead() -> i64 {
    2
}

fn default_max_tokens() -> i64 {
    20
}

fn default_iterations() -> i64 {
    4
}

fn default_threshold() -> i64 {
    3
}

/// Search settings for one session. Numeric fields are signed so that
/// negative values reach validation instead of failing to parse; `K`, `L`
/// and `T` are accepted as aliases.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mindless_model: Option<String>,
    #[serde(default = "default_partner")]
    pub partner: PartnerKind,
    #[serde(default = "default_algorithm")]
    pub algorithm: UtteranceAlgorithm,
    #[serde(default = "default_width", alias = "K")]
    pub beam_width: i64,
    #[serde(default = "default_lookahead", alias = "L")]
    pub lookahead: i64,
    #[serde(default = "default_max_tokens", alias = "T")]
    pub max_tokens: i64,
    #[serde(default = "default_iterations")]
    pub iterations: i64,
    #[serde(default = "default_threshold")]
    pub similarity_threshold: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner_context: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub self_persona: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub partner_persona: Vec<String>,
}

impl EngineConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            mindless_model: None,
            partner: default_partner(),
            algorithm: default_algorithm(),
            beam_width: default_width(),
            lookahead: default_lookahead(),
            max_tokens: default_max_tokens(),
            iterations: default_iterations(),
            similarity_threshold: default_threshold(),
            self_context: None,
            partner_context: None,
            self_persona: Vec::new(),
            partner_persona: Vec::new(),
        }
    }

    pub fn params(&self) -> ServiceResult<MultiTurnParams> {
        let positive = |v: i64, name: &str| -> ServiceResult<usize> {
            if v < 1 {
                Err(ServiceError::Validation(format!("{name} must be at least 1, got {v}")))
            } else {
                Ok(v as usize)
            }
        };
        let non_negative = |v: i64, name: &str| -> ServiceResult<usize> {
            if v < 0 {
                Err(ServiceError::Validation(format!("{name} must not be negative, got {v}")))
            } else {
                Ok(v as usize)
            }
        };
        let params = MultiTurnParams {
            beam_width: positive(self.beam_width, "beam_width")?,
            lookahead: non_negative(self.lookahead, "lookahead")?,
            max_tokens: positive(self.max_tokens, "max_tokens")?,
            algorithm: self.algorithm,
            iterations: positive(self.iterations, "iterations")?,
            similarity_threshold: non_negative(self.similarity_threshold, "similarity_threshold")?,
        };
        params.search_params().validate()?;
        Ok(params)
    }

    /// Checks the configuration and binds it to registry models.
    pub fn resolve(&self, registry: &Registry) -> ServiceResult<Engine> {
        let params = self.params()?;
        let entry = registry.get(&self.model)?;
        let vocab = entry.model.vocabulary();
        let context = |owner, key: &Option<String>, default: &Option<String>, persona: &[String]| {
            let lines = persona
                .iter()
                .map(|l| vocab.encode(l))
                .collect::<turnbeam_core::Result<Vec<_>>>()?;
            Ok::<_, ServiceError>(Context {
                owner,
                key: key.clone().or_else(|| default.clone()),
                lines,
            })
        };
        let self_context = context(
            SpeakerRole::SelfSpeaker,
            &self.self_context,
            &entry.info.default_self_context,
            &self.self_persona,
        )?;
        let partner_context = context(
            SpeakerRole::Partner,
            &self.partner_context,
            &entry.info.default_partner_context,
            &self.partner_persona,
        )?;
        let mindless = match (&self.mindless_model, self.partner) {
            (Some(id), _) => Some(registry.get(id)?.model.clone()),
            (None, PartnerKind::Mindless) => {
                return Err(ServiceError::Validation(
                    "mindless partner needs `mindless_model`".into(),
                ))
            }
            (None, _) => None,
        };
        let engine = Engine {
            self_model: entry.model.clone(),
            mindless,
            partner_kind: self.partner,
            self_context,
            partner_context,
            params,
        };
        // surfaces unknown context keys now rather than on the first search
        engine.self_model.next_token_logprobs(&[], &engine.self_context, &[])?;
        engine.self_model.next_token_logprobs(&[], &engine.partner_context, &[])?;
        engine.partner()?;
        Ok(engine)
    }
}

/// A resolved configuration, ready to decode.
pub struct Engine {
    pub self_model: Arc<LoadedModel>,
    pub mindless: Option<Arc<LoadedModel>>,
    pub partner_kind: PartnerKind,
    pub self_context: Context,
    pub partner_context: Context,
    pub params: MultiTurnParams,
}

impl Engine {
    pub fn vocabulary(&self) -> &Vocabulary {
        self.self_model.vocabulary()
    }

    pub fn partner(&self) -> turnbeam_core::Result<turnbeam_core::PartnerModel<'_>> {
        make_partner(
            self.partner_kind,
            &*self.self_model,
            self.mindless.as_deref().map(|m| m as &dyn SpeakerModel),
            &self.self_context,
            Some(&self.partner_context),
        )
    }

    pub fn respond(&self, history: &[Utterance]) -> turnbeam_core::Result<(ScoredUtterance, SearchTrace)> {
        multi_turn_search(
            SelfSide {
                model: &*self.self_model,
                context: &self.self_context,
            },
            &self.partner()?,
            history,
            &self.params,
        )
    }

    pub fn empty_conversation(&self) -> Conversation {
        Conversation::new(self.self_context.clone(), self.partner_context.clone())
    }
}
