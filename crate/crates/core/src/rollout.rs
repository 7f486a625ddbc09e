//! Engine-driven conversations against a partner policy.

use crate::conversation::{Context, Conversation, SpeakerRole, Utterance};
use crate::error::{Error, Result};
use crate::model::SpeakerModel;
use crate::multiturn::{multi_turn_search, MultiTurnParams, PartnerModel, SearchTrace, SelfSide};
use crate::search::{greedy_search, ScoredUtterance, Turn};

/// Self-side decoder: a self model and context plus the partner
/// approximation used for lookahead.
pub struct Engine<'a> {
    pub self_model: &'a dyn SpeakerModel,
    pub self_context: Context,
    pub partner: PartnerModel<'a>,
    pub params: MultiTurnParams,
}

impl Engine<'_> {
    pub fn respond(&self, history: &[Utterance]) -> Result<(ScoredUtterance, SearchTrace)> {
        multi_turn_search(
            SelfSide {
                model: self.self_model,
                context: &self.self_context,
            },
            &self.partner,
            history,
            &self.params,
        )
    }
}

/// Produces the partner's utterances during a rollout. `None` ends the
/// conversation.
pub trait PartnerPolicy {
    fn respond(&mut self, history: &[Utterance]) -> Result<Option<Utterance>>;
}

/// Replays recorded partner utterances in order, ignoring what the engine
/// said.
#[derive(Clone, Debug)]
pub struct ScriptedPartner {
    turns: Vec<Utterance>,
    next: usize,
}

impl ScriptedPartner {
    pub fn new(turns: Vec<Utterance>) -> Result<Self> {
        if let Some(u) = turns.iter().find(|u| u.speaker != SpeakerRole::Partner) {
            return Err(Error::Conversation(format!(
                "scripted partner given a {} utterance",
                u.speaker.as_str()
            )));
        }
        Ok(Self { turns, next: 0 })
    }

    pub fn from_conversation(conv: &Conversation) -> Self {
        Self {
            turns: conv
                .utterances
                .iter()
                .filter(|u| u.speaker == SpeakerRole::Partner)
                .cloned()
                .collect(),
            next: 0,
        }
    }
}

impl PartnerPolicy for ScriptedPartner {
    fn respond(&mut self, _history: &[Utterance]) -> Result<Option<Utterance>> {
        let out = self.turns.get(self.next).cloned();
        self.next += 1;
        Ok(out)
    }
}

/// A partner that answers greedily under its own model and true context.
pub struct ModelPartner<'a> {
    pub model: &'a dyn SpeakerModel,
    pub context: Context,
    pub max_tokens: usize,
}

impl PartnerPolicy for ModelPartner<'_> {
    fn respond(&mut self, history: &[Utterance]) -> Result<Option<Utterance>> {
        let turn = Turn::new(self.model, &self.context, history, SpeakerRole::Partner);
        Ok(Some(greedy_search(turn, self.max_tokens)?.utterance))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub conversation: Conversation,
    pub traces: Vec<SearchTrace>,
}

/// Alternates engine and partner for up to `self_turns` engine turns,
/// starting from `start` (which must be at a self turn).
pub fn rollout(
    engine: &Engine<'_>,
    partner: &mut dyn PartnerPolicy,
    start: Conversation,
    self_turns: usize,
) -> Result<Rollout> {
    let mut conversation = start;
    let mut traces = Vec::with_capacity(self_turns);
    for _ in 0..self_turns {
        let (reply, trace) = engine.respond(&conversation.utterances)?;
        conversation.push(reply.utterance)?;
        traces.push(trace);
        match partner.respond(&conversation.utterances)? {
            Some(u) => conversation.push(u)?,
            None => break,
        }
    }
    Ok(Rollout {
        conversation,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::multiturn::{make_partner, PartnerKind};

    #[test]
    fn scripted_rollout_alternates_and_stops() {
        let m = fixtures::f1();
        let v = m.vocabulary();
        let ctx = Context::keyed(SpeakerRole::SelfSpeaker, "c1");
        let engine = Engine {
            self_model: &m,
            self_context: ctx.clone(),
            partner: make_partner(PartnerKind::Egocentric, &m, None, &ctx, None).unwrap(),
            params: MultiTurnParams {
                beam_width: 3,
                lookahead: 1,
                max_tokens: 3,
                ..MultiTurnParams::default()
            },
        };
        let mut partner =
            ScriptedPartner::new(vec![Utterance::from_text(SpeakerRole::Partner, "b b", v).unwrap()]).unwrap();
        let start = Conversation::new(ctx.clone(), Context::keyed(SpeakerRole::Partner, "c1"));
        let out = rollout(&engine, &mut partner, start, 5).unwrap();
        // self, partner, self, then the script runs out
        assert_eq!(out.conversation.utterances.len(), 3);
        assert_eq!(out.traces.len(), 2);
    }

    #[test]
    fn scripted_partner_rejects_self_lines() {
        let m = fixtures::f1();
        let u = Utterance::from_text(SpeakerRole::SelfSpeaker, "a", m.vocabulary()).unwrap();
        assert!(ScriptedPartner::new(vec![u]).is_err());
    }
}
