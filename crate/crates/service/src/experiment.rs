//! Batch experiments: every requested strategy cell is rolled out against
//! a partner policy over a corpus, and each cell becomes one report row.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use turnbeam_core::corpus::{to_conversations, CorpusRecord};
use turnbeam_core::metrics::{conversation_nll, selection_stats, ReportRow};
use turnbeam_core::multiturn::{make_partner, MultiTurnParams, PartnerKind};
use turnbeam_core::rollout::{rollout, Engine, ModelPartner, PartnerPolicy, ScriptedPartner};
use turnbeam_core::{Conversation, SpeakerModel, SpeakerRole, UtteranceAlgorithm};

use crate::error::{ServiceError, ServiceResult};
use crate::registry::Registry;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Replays the corpus partner turns in order.
    #[default]
    Scripted,
    /// Answers greedily with the self model under the partner context.
    Model,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub algorithm: UtteranceAlgorithm,
    pub steps: usize,
    pub partner: PartnerKind,
}

fn default_width() -> usize {
    5
}

fn default_max_tokens() -> usize {
    20
}

fn default_iterations() -> usize {
    4
}

fn default_threshold() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentMatrix {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mindless_model: Option<String>,
    #[serde(default = "default_width")]
    pub beam_width: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_threshold")]
    pub similarity_threshold: usize,
    /// Size of the seeded random subset of the corpus; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversations: Option<usize>,
    #[serde(default)]
    pub partner_policy: PolicyKind,
    /// Context keys for table models; default to the registry's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner_context: Option<String>,
    pub cells: Vec<Cell>,
}

/// Both algorithms at steps 0, 1, 2, 4 and 8 with every partner kind,
/// keeping a single (egocentric) cell for steps 0, where the partner is
/// never consulted.
pub fn full_grid() -> Vec<Cell> {
    let mut cells = Vec::new();
    for algorithm in [UtteranceAlgorithm::Beam, UtteranceAlgorithm::IterativeBeam] {
        cells.push(Cell {
            algorithm,
            steps: 0,
            partner: PartnerKind::Egocentric,
        });
        for steps in [1, 2, 4, 8] {
            for partner in PartnerKind::ALL {
                cells.push(Cell {
                    algorithm,
                    steps,
                    partner,
                });
            }
        }
    }
    cells
}

/// Runs every cell over the seeded subset of the corpus. Deterministic in
/// (matrix, corpus, seed).
pub fn run_experiment(
    matrix: &ExperimentMatrix,
    records: &[CorpusRecord],
    registry: &Registry,
    seed: u64,
) -> ServiceResult<Vec<ReportRow>> {
    if matrix.cells.is_empty() {
        return Err(ServiceError::Validation("experiment matrix has no cells".into()));
    }
    let entry = registry.get(&matrix.model)?;
    let model: &dyn SpeakerModel = &*entry.model;
    let mindless = match &matrix.mindless_model {
        Some(id) => Some(registry.get(id)?.model.clone()),
        None => None,
    };
    let mut conversations = to_conversations(records, model.vocabulary())?;
    if conversations.is_empty() {
        return Err(ServiceError::Validation("corpus is empty".into()));
    }
    let self_key = matrix.self_context.clone().or_else(|| entry.info.default_self_context.clone());
    let partner_key = matrix
        .partner_context
        .clone()
        .or_else(|| entry.info.default_partner_context.clone());
    for conv in &mut conversations {
        conv.self_context.key = self_key.clone();
        conv.partner_context.key = partner_key.clone();
    }
    conversations.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if let Some(n) = matrix.conversations {
        conversations.truncate(n);
    }

    let mut rows = Vec::with_capacity(matrix.cells.len());
    for cell in &matrix.cells {
        let params = MultiTurnParams {
            beam_width: matrix.beam_width,
            lookahead: cell.steps,
            max_tokens: matrix.max_tokens,
            algorithm: cell.algorithm,
            iterations: matrix.iterations,
            similarity_threshold: matrix.similarity_threshold,
        };
        let mut nll_sum = 0.0;
        let mut traces = Vec::new();
        for conv in &conversations {
            let partner = make_partner(
                cell.partner,
                model,
                mindless.as_deref().map(|m| m as &dyn SpeakerModel),
                &conv.self_context,
                Some(&conv.partner_context),
            )?;
            let engine = Engine {
                self_model: model,
                self_context: conv.self_context.clone(),
                partner,
                params,
            };
            let self_turns = conv
                .utterances
                .iter()
                .filter(|u| u.speaker == SpeakerRole::SelfSpeaker)
                .count()
                .max(1);
            let start = Conversation::new(conv.self_context.clone(), conv.partner_context.clone());
            let mut policy: Box<dyn PartnerPolicy> = match matrix.partner_policy {
                PolicyKind::Scripted => Box::new(ScriptedPartner::from_conversation(conv)),
                PolicyKind::Model => Box::new(ModelPartner {
                    model,
                    context: conv.partner_context.clone(),
                    max_tokens: matrix.max_tokens,
                }),
            };
            let out = rollout(&engine, policy.as_mut(), start, self_turns)?;
            nll_sum += conversation_nll(&out.conversation, model, model)?;
            traces.extend(out.traces);
        }
        let stats = selection_stats(&traces)?;
        rows.push(ReportRow {
            strategy: cell.algorithm.as_str().to_string(),
            steps: cell.steps,
            width: matrix.beam_width,
            partner_kind: cell.partner.as_str().to_string(),
            nll_mean: nll_sum / conversations.len() as f64,
            rate: stats.rate,
            rank: stats.mean_rank,
            gap: stats.mean_gap,
            n: conversations.len(),
        });
    }
    Ok(rows)
}
