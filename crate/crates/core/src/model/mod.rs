//! Speaker models: conditional next-token distributions over a vocabulary.

mod ngram;
mod tabular;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub use ngram::{fit_ngram, NGramConfig, NGramModel};
pub use tabular::{TabularModel, TabularSpec, START_ROW};

use crate::conversation::{check_alternation, Context, Conversation, SpeakerRole, Utterance};
use crate::error::{Error, Result};
use crate::vocab::{Token, Vocabulary};

/// A speaker's next-token distribution given the conversation so far, the
/// speaker's private context and the tokens of the utterance in progress.
///
/// Implementations are immutable and deterministic; the returned vector has
/// one natural-log probability per vocabulary entry. Zero-probability
/// tokens are reported as `-inf`.
pub trait SpeakerModel: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    fn next_token_logprobs(
        &self,
        history: &[Utterance],
        context: &Context,
        partial: &[Token],
    ) -> Result<Vec<f64>>;
}

impl<M: SpeakerModel + ?Sized> SpeakerModel for &M {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next_token_logprobs(
        &self,
        history: &[Utterance],
        context: &Context,
        partial: &[Token],
    ) -> Result<Vec<f64>> {
        (**self).next_token_logprobs(history, context, partial)
    }
}

impl<M: SpeakerModel + ?Sized> SpeakerModel for Arc<M> {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next_token_logprobs(
        &self,
        history: &[Utterance],
        context: &Context,
        partial: &[Token],
    ) -> Result<Vec<f64>> {
        (**self).next_token_logprobs(history, context, partial)
    }
}

/// Wraps a model and counts `next_token_logprobs` calls.
pub struct CountingModel<M> {
    inner: M,
    calls: AtomicU64,
}

impl<M: SpeakerModel> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<M: SpeakerModel> SpeakerModel for CountingModel<M> {
    fn vocabulary(&self) -> &Vocabulary {
        self.inner.vocabulary()
    }

    fn next_token_logprobs(
        &self,
        history: &[Utterance],
        context: &Context,
        partial: &[Token],
    ) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.next_token_logprobs(history, context, partial)
    }
}

pub fn ensure_same_vocabulary(a: &Vocabulary, b: &Vocabulary, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::VocabularyMismatch(what.to_string()))
    }
}

/// Sum of per-token log-probabilities of `tokens` as the next utterance
/// after `history`. No length normalization.
pub fn utterance_logprob(
    model: &dyn SpeakerModel,
    history: &[Utterance],
    context: &Context,
    tokens: &[Token],
) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..tokens.len() {
        let logprobs = model.next_token_logprobs(history, context, &tokens[..t])?;
        let lp = *logprobs.get(tokens[t].index()).ok_or(Error::TokenOutOfRange {
            id: tokens[t].0,
            size: logprobs.len(),
        })?;
        total += lp;
    }
    Ok(total)
}

/// Joint log-probability of a conversation: each utterance is scored by
/// its speaker's model under that speaker's context, conditioned on every
/// earlier utterance. The empty conversation scores 0.
pub fn conversation_logprob(
    conv: &Conversation,
    self_model: &dyn SpeakerModel,
    partner_model: &dyn SpeakerModel,
) -> Result<f64> {
    let vocab = self_model.vocabulary();
    ensure_same_vocabulary(vocab, partner_model.vocabulary(), "self and partner models")?;
    conv.validate(vocab)?;
    let mut total = 0.0;
    for (m, u) in conv.utterances.iter().enumerate() {
        let model = match u.speaker {
            SpeakerRole::SelfSpeaker => self_model,
            SpeakerRole::Partner => partner_model,
        };
        total += utterance_logprob(model, &conv.utterances[..m], conv.context_for(u.speaker), &u.tokens)?;
    }
    Ok(total)
}

/// Log-probability of `continuation` appended after `prefix`, scoring the
/// continuation's utterances with the full prefix as history.
pub fn continuation_logprob(
    prefix: &[Utterance],
    continuation: &[Utterance],
    self_model: &dyn SpeakerModel,
    self_context: &Context,
    partner_model: &dyn SpeakerModel,
    partner_context: &Context,
) -> Result<f64> {
    let mut history = prefix.to_vec();
    check_alternation(&history)?;
    let mut total = 0.0;
    for u in continuation {
        let (model, ctx) = match u.speaker {
            SpeakerRole::SelfSpeaker => (self_model, self_context),
            SpeakerRole::Partner => (partner_model, partner_context),
        };
        if u.speaker != SpeakerRole::next_after(history.len()) {
            return Err(Error::WrongSpeaker {
                expected: SpeakerRole::next_after(history.len()),
                history_len: history.len(),
            });
        }
        total += utterance_logprob(model, &history, ctx, &u.tokens)?;
        history.push(u.clone());
    }
    Ok(total)
}

pub(crate) fn checked_row(probs: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in probs {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Model(format!("{what}: invalid probability {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Model(format!("{what}: row sums to {sum}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::f1;

    #[test]
    fn empty_conversation_scores_zero() {
        let m = f1();
        let conv = Conversation::new(
            Context::keyed(SpeakerRole::SelfSpeaker, "c1"),
            Context::keyed(SpeakerRole::Partner, "c1"),
        );
        assert_eq!(conversation_logprob(&conv, &m, &m).unwrap(), 0.0);
    }

    #[test]
    fn f1_single_utterance() {
        let m = f1();
        let mut conv = Conversation::new(
            Context::keyed(SpeakerRole::SelfSpeaker, "c1"),
            Context::keyed(SpeakerRole::Partner, "c1"),
        );
        conv.push(Utterance::from_text(SpeakerRole::SelfSpeaker, "a b </s>", m.vocabulary()).unwrap())
            .unwrap();
        let lp = conversation_logprob(&conv, &m, &m).unwrap();
        assert!((lp - 3.0 * 0.6f64.ln()).abs() < 1e-12);
        assert!((lp + 1.5325).abs() < 1e-4);
    }

    #[test]
    fn deterministic_chain_scores_zero() {
        let spec = TabularSpec::from_json(
            r#"{"vocab":["a","b","</s>"],"eos":"</s>","contexts":{"k":{
                "START":[1,0,0],"a":[0,1,0],"b":[0,0,1]}}}"#,
        )
        .unwrap();
        let m = TabularModel::from_spec(spec).unwrap();
        let mut conv = Conversation::new(
            Context::empty(SpeakerRole::SelfSpeaker),
            Context::empty(SpeakerRole::Partner),
        );
        conv.push(Utterance::from_text(SpeakerRole::SelfSpeaker, "a b", m.vocabulary()).unwrap())
            .unwrap();
        assert_eq!(conversation_logprob(&conv, &m, &m).unwrap(), 0.0);
    }

    #[test]
    fn vocabulary_mismatch_is_a_config_error() {
        let m = f1();
        let other = TabularModel::from_spec(
            TabularSpec::from_json(
                r#"{"vocab":["x","</s>"],"eos":"</s>","contexts":{"k":{"START":[0.5,0.5],"x":[0.5,0.5]}}}"#,
            )
            .unwrap(),
        )
        .unwrap();
        let conv = Conversation::new(
            Context::empty(SpeakerRole::SelfSpeaker),
            Context::empty(SpeakerRole::Partner),
        );
        assert!(matches!(
            conversation_logprob(&conv, &m, &other),
            Err(Error::VocabularyMismatch(_))
        ));
    }

    #[test]
    fn counting_model_counts_calls() {
        let m = CountingModel::new(f1());
        let ctx = Context::keyed(SpeakerRole::SelfSpeaker, "c1");
        let toks = m.vocabulary().encode("a b </s>").unwrap();
        utterance_logprob(&m, &[], &ctx, &toks).unwrap();
        assert_eq!(m.calls(), 3);
    }
}
