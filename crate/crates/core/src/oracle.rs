//! Brute-force enumeration over every utterance of length at most
//! `max_tokens`, for tiny vocabularies only.
//!
//! Futures are truncated at `lookahead` utterances after the candidate,
//! alternating the partner (odd depths) and the self speaker (even depths)
//! exactly as multi-turn search does. Zero-probability utterances are left
//! out of every enumeration.

use std::cmp::Ordering;

use crate::conversation::{check_alternation, Context, SpeakerRole, Utterance};
use crate::error::{Error, Result};
use crate::model::{ensure_same_vocabulary, SpeakerModel};
use crate::multiturn::{PartnerModel, SelfSide};
use crate::search::{rank_order, ScoredUtterance, Turn};
use crate::vocab::Token;

pub const DEFAULT_CAP: u128 = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleParams {
    pub max_tokens: usize,
    pub lookahead: usize,
    /// Largest number of sequences the oracle agrees to enumerate.
    pub cap: u128,
}

impl OracleParams {
    pub fn new(max_tokens: usize, lookahead: usize) -> Self {
        Self {
            max_tokens,
            lookahead,
            cap: DEFAULT_CAP,
        }
    }
}

/// Number of distinct utterances of length ≤ `max_tokens` over a
/// vocabulary of `vocab_size` tokens including eos: eos-terminated ones of
/// every length plus truncated ones of full length.
pub fn utterance_count(vocab_size: usize, max_tokens: usize) -> u128 {
    let content = vocab_size.saturating_sub(1) as u128;
    let mut total: u128 = 0;
    let mut power: u128 = 1;
    for _ in 0..max_tokens {
        total = total.saturating_add(power);
        power = power.saturating_mul(content);
    }
    total.saturating_add(power)
}

fn check_cap(required: u128, cap: u128) -> Result<()> {
    if required > cap {
        Err(Error::EnumerationCap { required, cap })
    } else {
        Ok(())
    }
}

/// Every positive-probability utterance with its score, best first.
pub fn enumerate_utterances(turn: Turn<'_>, max_tokens: usize) -> Result<Vec<ScoredUtterance>> {
    turn.validate()?;
    let eos = turn.model.vocabulary().eos();
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(max_tokens);
    expand(turn, eos, max_tokens, &mut prefix, 0.0, &mut out)?;
    out.sort_by(|a, b| rank_order(a.logprob, a.tokens(), b.logprob, b.tokens()));
    Ok(out)
}

fn expand(
    turn: Turn<'_>,
    eos: Token,
    max_tokens: usize,
    prefix: &mut Vec<Token>,
    score: f64,
    out: &mut Vec<ScoredUtterance>,
) -> Result<()> {
    let lps = turn
        .model
        .next_token_logprobs(turn.history, turn.context, prefix)?;
    for (i, &lp) in lps.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let tok = Token(i as u32);
        prefix.push(tok);
        let s = score + lp;
        if tok == eos || prefix.len() == max_tokens {
            out.push(ScoredUtterance {
                utterance: Utterance::new(turn.role, prefix.clone(), eos)?,
                logprob: s,
            });
        } else {
            expand(turn, eos, max_tokens, prefix, s, out)?;
        }
        prefix.pop();
    }
    Ok(())
}

/// Exact utterance-level argmax.
pub fn oracle_utterance_argmax(turn: Turn<'_>, params: &OracleParams) -> Result<ScoredUtterance> {
    check_cap(utterance_count(turn.model.vocabulary().len(), params.max_tokens), params.cap)?;
    enumerate_utterances(turn, params.max_tokens)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Search("no utterance has positive probability".into()))
}

/// A candidate first utterance and its conversation-level objective.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCandidate {
    pub candidate: ScoredUtterance,
    /// Candidate log-probability plus the continuation term.
    pub objective: f64,
    /// Best continuation found (optimistic oracle only).
    pub continuation: Vec<Utterance>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Reduce {
    Max,
    LogSumExp,
}

struct Enumerator<'a> {
    this: SelfSide<'a>,
    partner: &'a PartnerModel<'a>,
    max_tokens: usize,
    lookahead: usize,
}

impl Enumerator<'_> {
    fn responder(&self, depth: usize) -> (&dyn SpeakerModel, &Context, SpeakerRole) {
        if depth % 2 == 1 {
            (self.partner.model, &self.partner.context, SpeakerRole::Partner)
        } else {
            (self.this.model, self.this.context, SpeakerRole::SelfSpeaker)
        }
    }

    /// Best cumulative score among complete paths, accumulated forward from
    /// `score` so the additions happen in the same order as multi-turn
    /// search.
    fn best_path(
        &self,
        history: &mut Vec<Utterance>,
        depth: usize,
        score: f64,
    ) -> Result<(f64, Vec<Utterance>)> {
        if depth > self.lookahead {
            return Ok((score, Vec::new()));
        }
        let (model, ctx, role) = self.responder(depth);
        let replies = enumerate_utterances(Turn::new(model, ctx, history, role), self.max_tokens)?;
        let mut best: Option<(f64, Vec<Utterance>)> = None;
        for reply in replies {
            history.push(reply.utterance.clone());
            let (total, mut path) = self.best_path(history, depth + 1, score + reply.logprob)?;
            history.pop();
            path.insert(0, reply.utterance);
            let better = match &best {
                None => true,
                Some((b, bp)) => match total.total_cmp(b) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => path_tokens(&path) < path_tokens(bp),
                },
            };
            if better {
                best = Some((total, path));
            }
        }
        best.ok_or_else(|| Error::Search(format!("no continuation at depth {depth}")))
    }

    /// log Σ over every continuation of its probability.
    fn log_mass(&self, history: &mut Vec<Utterance>, depth: usize) -> Result<f64> {
        if depth > self.lookahead {
            return Ok(0.0);
        }
        let (model, ctx, role) = self.responder(depth);
        let replies = enumerate_utterances(Turn::new(model, ctx, history, role), self.max_tokens)?;
        let mut terms = Vec::with_capacity(replies.len());
        for reply in replies {
            history.push(reply.utterance);
            terms.push(reply.logprob + self.log_mass(history, depth + 1)?);
            history.pop();
        }
        Ok(log_sum_exp(&terms))
    }
}

fn path_tokens(path: &[Utterance]) -> Vec<&[Token]> {
    path.iter().map(|u| u.tokens.as_slice()).collect()
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn conversation_ranking(
    this: SelfSide<'_>,
    partner: &PartnerModel<'_>,
    history: &[Utterance],
    params: &OracleParams,
    reduce: Reduce,
) -> Result<Vec<OracleCandidate>> {
    ensure_same_vocabulary(this.model.vocabulary(), partner.model.vocabulary(), "self and partner models")?;
    check_alternation(history)?;
    let per_turn = utterance_count(this.model.vocabulary().len(), params.max_tokens);
    let required = (0..=params.lookahead).fold(1u128, |acc, _| acc.saturating_mul(per_turn));
    check_cap(required, params.cap)?;

    let enumerator = Enumerator {
        this,
        partner,
        max_tokens: params.max_tokens,
        lookahead: params.lookahead,
    };
    let candidates = enumerate_utterances(
        Turn::new(this.model, this.context, history, SpeakerRole::SelfSpeaker),
        params.max_tokens,
    )?;
    let mut scratch = history.to_vec();
    let mut ranked = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        scratch.push(candidate.utterance.clone());
        let (objective, continuation) = match reduce {
            Reduce::Max => enumerator.best_path(&mut scratch, 1, candidate.logprob)?,
            Reduce::LogSumExp => (candidate.logprob + enumerator.log_mass(&mut scratch, 1)?, Vec::new()),
        };
        scratch.pop();
        ranked.push(OracleCandidate {
            candidate,
            objective,
            continuation,
        });
    }
    // candidates arrive in utterance-level order, which is the secondary key
    ranked.sort_by(|a, b| b.objective.total_cmp(&a.objective));
    Ok(ranked)
}

/// Every candidate ranked by its own log-probability plus the best
/// continuation's log-probability.
pub fn oracle_optimistic_ranking(
    this: SelfSide<'_>,
    partner: &PartnerModel<'_>,
    history: &[Utterance],
    params: &OracleParams,
) -> Result<Vec<OracleCandidate>> {
    conversation_ranking(this, partner, history, params, Reduce::Max)
}

/// Every candidate ranked by its own log-probability plus the log of the
/// total continuation mass.
pub fn oracle_conservative_ranking(
    this: SelfSide<'_>,
    partner: &PartnerModel<'_>,
    history: &[Utterance],
    params: &OracleParams,
) -> Result<Vec<OracleCandidate>> {
    conversation_ranking(this, partner, history, params, Reduce::LogSumExp)
}

pub fn oracle_optimistic_argmax(
    this: SelfSide<'_>,
    partner: &PartnerModel<'_>,
    history: &[Utterance],
    params: &OracleParams,
) -> Result<OracleCandidate> {
    first(oracle_optimistic_ranking(this, partner, history, params)?)
}

pub fn oracle_conservative_argmax(
    this: SelfSide<'_>,
    partner: &PartnerModel<'_>,
    history: &[Utterance],
    params: &OracleParams,
) -> Result<OracleCandidate> {
    first(oracle_conservative_ranking(this, partner, history, params)?)
}

fn first(ranked: Vec<OracleCandidate>) -> Result<OracleCandidate> {
    ranked
        .into_iter()
        .next()
        .ok_or_else(|| Error::Search("no candidate has positive probability".into()))
}
