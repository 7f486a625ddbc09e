//! Multi-turn beam search.
//!
//! Each utterance-level candidate for the self speaker is unrolled through
//! `lookahead` further utterances, alternating partner and self, keeping
//! the `beam_width` best utterance sequences at every depth. The chosen
//! utterance is the root of the best sequence at the last depth, so it is
//! always one of the initial candidates.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conversation::{check_alternation, Context, SpeakerRole, Utterance};
use crate::error::{Error, Result};
use crate::model::{ensure_same_vocabulary, CountingModel, SpeakerModel};
use crate::search::{ScoredUtterance, SearchParams, Turn, UtteranceAlgorithm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartnerKind {
    /// Separate context-free model.
    Mindless,
    /// Self model under the self context.
    Egocentric,
    /// Self model under the true partner context.
    Transparent,
}

impl PartnerKind {
    pub const ALL: [PartnerKind; 3] = [
        PartnerKind::Mindless,
        PartnerKind::Egocentric,
        PartnerKind::Transparent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PartnerKind::Mindless => "mindless",
            PartnerKind::Egocentric => "egocentric",
            PartnerKind::Transparent => "transparent",
        }
    }
}

impl fmt::Display for PartnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PartnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mindless" => Ok(Self::Mindless),
            "egocentric" => Ok(Self::Egocentric),
            "transparent" => Ok(Self::Transparent),
            other => Err(Error::Config(format!("unknown partner kind `{other}`"))),
        }
    }
}

/// The model and context used to predict partner turns during lookahead.
#[derive(Clone)]
pub struct PartnerModel<'a> {
    pub kind: PartnerKind,
    pub model: &'a dyn SpeakerModel,
    pub context: Context,
}

impl fmt::Debug for PartnerModel<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartnerModel")
            .field("kind", &self.kind)
            .field("context", &self.context)
            .finish_non_exhaustive()
    }
}

pub fn make_partner<'a>(
    kind: PartnerKind,
    self_model: &'a dyn SpeakerModel,
    mindless_model: Option<&'a dyn SpeakerModel>,
    self_context: &Context,
    partner_context: Option<&Context>,
) -> Result<PartnerModel<'a>> {
    let (model, context) = match kind {
        PartnerKind::Mindless => {
            let model = mindless_model.ok_or_else(|| {
                Error::Config("mindless partner needs a separately supplied model".into())
            })?;
            ensure_same_vocabulary(self_model.vocabulary(), model.vocabulary(), "self and mindless models")?;
            (model, Context::empty(SpeakerRole::Partner))
        }
        PartnerKind::Egocentric => (self_model, self_context.clone()),
        PartnerKind::Transparent => {
            let ctx = partner_context.ok_or_else(|| {
                Error::Config("transparent partner needs the partner context".into())
            })?;
            (self_model, ctx.clone())
        }
    };
    Ok(PartnerModel {
        kind,
        model,
        context,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiTurnParams {
    pub beam_width: usize,
    pub lookahead: usize,
    pub max_tokens: usize,
    pub algorithm: UtteranceAlgorithm,
    /// Passed to iterative beam search.
    pub iterations: usize,
    pub similarity_threshold: usize,
}

impl Default for MultiTurnParams {
    fn default() -> Self {
        Self {
            beam_width: 10,
            lookahead: 2,
            max_tokens: 20,
            algorithm: UtteranceAlgorithm::Beam,
            iterations: 4,
            similarity_threshold: 3,
        }
    }
}

impl MultiTurnParams {
    pub fn search_params(&self) -> SearchParams {
        SearchParams {
            beam_width: self.beam_width,
            max_tokens: self.max_tokens,
            iterations: self.iterations,
            similarity_threshold: self.similarity_threshold,
        }
    }
}

/// A root candidate followed by its lookahead utterances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub root_index: usize,
    pub utterances: Vec<Utterance>,
    /// Log-probability of each utterance under the model that produced it.
    pub utterance_logprobs: Vec<f64>,
    /// Cumulative score of the whole sequence.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub depth: usize,
    pub entries: Vec<ScoredSequence>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub beam_width: usize,
    pub lookahead: usize,
    pub max_tokens: usize,
    pub partner_kind: PartnerKind,
    pub algorithm: UtteranceAlgorithm,
    pub iterations: usize,
    pub similarity_threshold: usize,
}

/// Full record of one multi-turn search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub params: TraceParams,
    pub h0: HypothesisSet,
    /// For depths 1..=L, every extended sequence before pruning, best first.
    pub expansions: Vec<Vec<ScoredSequence>>,
    /// H_1..H_L.
    pub hypothesis_sets: Vec<HypothesisSet>,
    pub selected_root_index: usize,
    pub selected_rank_in_h0: usize,
    /// Model calls over the whole search.
    pub model_call_count: u64,
    /// Model calls spent after H_0 was built.
    pub lookahead_call_count: u64,
}

impl SearchTrace {
    pub fn final_set(&self) -> &HypothesisSet {
        self.hypothesis_sets.last().unwrap_or(&self.h0)
    }

    pub fn selected(&self) -> &ScoredSequence {
        &self.h0.entries[self.selected_root_index]
    }
}

fn sequence_order(a: &ScoredSequence, b: &ScoredSequence) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.root_index.cmp(&b.root_index))
        .then_with(|| {
            a.utterances
                .iter()
                .map(|u| &u.tokens)
                .cmp(b.utterances.iter().map(|u| &u.tokens))
        })
}

/// Everything `multi_turn_search` needs besides the partner model.
#[derive(Clone, Copy)]
pub struct SelfSide<'a> {
    pub model: &'a dyn SpeakerModel,
    pub context: &'a Context,
}

/// Runs multi-turn beam search for the self speaker's next utterance.
///
/// Returns the chosen H_0 candidate with its own utterance-level score and
/// the trace of every hypothesis set.
pub fn multi_turn_search(
    this: SelfSide<'_>,
    partner: &PartnerModel<'_>,
    history: &[Utterance],
    params: &MultiTurnParams,
) -> Result<(ScoredUtterance, SearchTrace)> {
    ensure_same_vocabulary(
        this.model.vocabulary(),
        partner.model.vocabulary(),
        "self and partner models",
    )?;
    check_alternation(history)?;
    if SpeakerRole::next_after(history.len()) != SpeakerRole::SelfSpeaker {
        return Err(Error::WrongSpeaker {
            expected: SpeakerRole::SelfSpeaker,
            history_len: history.len(),
        });
    }
    let search = params.search_params();
    search.validate()?;

    let counted_self = CountingModel::new(this.model);
    let counted_partner = CountingModel::new(partner.model);
    let calls = || counted_self.calls() + counted_partner.calls();

    let mut h0_cands = params.algorithm.run(
        Turn::new(&counted_self, this.context, history, SpeakerRole::SelfSpeaker),
        &search,
    )?;
    h0_cands.truncate(params.beam_width);
    if h0_cands.is_empty() {
        return Err(Error::Search("utterance-level search returned no candidates".into()));
    }
    let h0 = HypothesisSet {
        depth: 0,
        entries: h0_cands
            .iter()
            .enumerate()
            .map(|(k, c)| ScoredSequence {
                root_index: k,
                utterances: vec![c.utterance.clone()],
                utterance_logprobs: vec![c.logprob],
                score: c.logprob,
            })
            .collect(),
    };
    let h0_calls = calls();

    let mut expansions = Vec::with_capacity(params.lookahead);
    let mut sets: Vec<HypothesisSet> = Vec::with_capacity(params.lookahead);
    for depth in 1..=params.lookahead {
        let (model, context, role): (&dyn SpeakerModel, &Context, SpeakerRole) = if depth % 2 == 1 {
            (&counted_partner, &partner.context, SpeakerRole::Partner)
        } else {
            (&counted_self, this.context, SpeakerRole::SelfSpeaker)
        };
        let previous = sets.last().unwrap_or(&h0);
        let mut pool = Vec::with_capacity(previous.entries.len() * params.beam_width);
        let mut full_history = history.to_vec();
        for seq in &previous.entries {
            full_history.truncate(history.len());
            full_history.extend_from_slice(&seq.utterances);
            let mut replies = params
                .algorithm
                .run(Turn::new(model, context, &full_history, role), &search)?;
            replies.truncate(params.beam_width);
            for reply in replies {
                let mut utterances = seq.utterances.clone();
                utterances.push(reply.utterance);
                let mut utterance_logprobs = seq.utterance_logprobs.clone();
                utterance_logprobs.push(reply.logprob);
                pool.push(ScoredSequence {
                    root_index: seq.root_index,
                    utterances,
                    utterance_logprobs,
                    score: seq.score + reply.logprob,
                });
            }
        }
        if pool.is_empty() {
            return Err(Error::Search(format!("no continuations at lookahead depth {depth}")));
        }
        pool.sort_by(sequence_order);
        let entries = pool.iter().take(params.beam_width).cloned().collect();
        expansions.push(pool);
        sets.push(HypothesisSet { depth, entries });
    }

    let top = &sets.last().unwrap_or(&h0).entries[0];
    let selected = top.root_index;
    let trace = SearchTrace {
        params: TraceParams {
            beam_width: params.beam_width,
            lookahead: params.lookahead,
            max_tokens: params.max_tokens,
            partner_kind: partner.kind,
            algorithm: params.algorithm,
            iterations: params.iterations,
            similarity_threshold: params.similarity_threshold,
        },
        h0,
        expansions,
        hypothesis_sets: sets,
        selected_root_index: selected,
        selected_rank_in_h0: selected,
        model_call_count: calls(),
        lookahead_call_count: calls() - h0_calls,
    };
    Ok((h0_cands.swap_remove(selected), trace))
}
