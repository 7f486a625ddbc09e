//! Utterance-level decoding: greedy, beam and iterative beam search.
//!
//! Scores are raw sums of token log-probabilities. Every ranking breaks
//! score ties by the token-id sequence (lexicographic, shorter first on a
//! shared prefix), so results are fully deterministic.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conversation::{check_alternation, Context, SpeakerRole, Utterance};
use crate::error::{Error, Result};
use crate::model::SpeakerModel;
use crate::vocab::Token;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredUtterance {
    pub utterance: Utterance,
    pub logprob: f64,
}

impl ScoredUtterance {
    pub fn tokens(&self) -> &[Token] {
        &self.utterance.tokens
    }
}

/// Descending score, then ascending token sequence.
pub fn rank_order(a_score: f64, a_tokens: &[Token], b_score: f64, b_tokens: &[Token]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_tokens.cmp(b_tokens))
}

fn sort_scored(items: &mut [ScoredUtterance]) {
    items.sort_by(|a, b| rank_order(a.logprob, a.tokens(), b.logprob, b.tokens()));
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    pub beam_width: usize,
    pub max_tokens: usize,
    /// Iterative beam search only.
    pub iterations: usize,
    /// Iterative beam search only.
    pub similarity_threshold: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            beam_width: 10,
            max_tokens: 20,
            iterations: 4,
            similarity_threshold: 3,
        }
    }
}

impl SearchParams {
    /// Four iterations of width-5 beams with similarity threshold 3.
    pub fn iterative_defaults() -> Self {
        Self {
            beam_width: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_width < 1 {
            return Err(Error::Params("beam width must be at least 1".into()));
        }
        if self.max_tokens < 1 {
            return Err(Error::Params("max tokens must be at least 1".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Params("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Who is speaking next, under which model and context, after which history.
#[derive(Clone, Copy)]
pub struct Turn<'a> {
    pub model: &'a dyn SpeakerModel,
    pub context: &'a Context,
    pub history: &'a [Utterance],
    pub role: SpeakerRole,
}

impl<'a> Turn<'a> {
    pub fn new(
        model: &'a dyn SpeakerModel,
        context: &'a Context,
        history: &'a [Utterance],
        role: SpeakerRole,
    ) -> Self {
        Self {
            model,
            context,
            history,
            role,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_alternation(self.history)?;
        if SpeakerRole::next_after(self.history.len()) != self.role {
            return Err(Error::WrongSpeaker {
                expected: self.role,
                history_len: self.history.len(),
            });
        }
        Ok(())
    }

    fn logprobs(&self, partial: &[Token]) -> Result<Vec<f64>> {
        let lps = self
            .model
            .next_token_logprobs(self.history, self.context, partial)?;
        let size = self.model.vocabulary().len();
        if lps.len() != size {
            return Err(Error::Model(format!(
                "model returned {} log-probabilities for {size} tokens",
                lps.len()
            )));
        }
        Ok(lps)
    }

    fn finish(&self, tokens: Vec<Token>, logprob: f64) -> Result<ScoredUtterance> {
        let eos = self.model.vocabulary().eos();
        Ok(ScoredUtterance {
            utterance: Utterance::new(self.role, tokens, eos)?,
            logprob,
        })
    }
}

/// Picks the most likely token at every step (lowest id on ties) until eos
/// or `max_tokens`.
pub fn greedy_search(turn: Turn<'_>, max_tokens: usize) -> Result<ScoredUtterance> {
    turn.validate()?;
    if max_tokens < 1 {
        return Err(Error::Params("max tokens must be at least 1".into()));
    }
    let eos = turn.model.vocabulary().eos();
    let mut tokens = Vec::new();
    let mut logprob = 0.0;
    while tokens.len() < max_tokens {
        let lps = turn.logprobs(&tokens)?;
        let (best, lp) = lps
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bl), (i, &l)| {
                if l > bl {
                    (i, l)
                } else {
                    (bi, bl)
                }
            });
        if lp == f64::NEG_INFINITY {
            return Err(Error::Model("no token has positive probability".into()));
        }
        tokens.push(Token(best as u32));
        logprob += lp;
        if Token(best as u32) == eos {
            break;
        }
    }
    turn.finish(tokens, logprob)
}

#[derive(Clone, Debug)]
struct Hypothesis {
    tokens: Vec<Token>,
    logprob: f64,
    finished: bool,
}

/// Beam search where finished hypotheses stay in the beam and compete
/// with partial ones by raw score. `reject` filters freshly extended
/// hypotheses before ranking.
fn beam_core(
    turn: Turn<'_>,
    width: usize,
    max_tokens: usize,
    reject: &dyn Fn(&[Token]) -> bool,
) -> Result<Vec<ScoredUtterance>> {
    let eos = turn.model.vocabulary().eos();
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
        finished: false,
    }];
    for _ in 0..max_tokens {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        let mut pool = Vec::with_capacity(beam.len() * turn.model.vocabulary().len());
        for hyp in beam {
            if hyp.finished {
                pool.push(hyp);
                continue;
            }
            let lps = turn.logprobs(&hyp.tokens)?;
            for (i, &lp) in lps.iter().enumerate() {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let tok = Token(i as u32);
                let mut tokens = Vec::with_capacity(hyp.tokens.len() + 1);
                tokens.extend_from_slice(&hyp.tokens);
                tokens.push(tok);
                if reject(&tokens) {
                    continue;
                }
                pool.push(Hypothesis {
                    tokens,
                    logprob: hyp.logprob + lp,
                    finished: tok == eos,
                });
            }
        }
        pool.sort_by(|a, b| rank_order(a.logprob, &a.tokens, b.logprob, &b.tokens));
        pool.truncate(width);
        beam = pool;
        if beam.is_empty() {
            break;
        }
    }
    let mut out = beam
        .into_iter()
        .filter(|h| !h.tokens.is_empty())
        .map(|h| turn.finish(h.tokens, h.logprob))
        .collect::<Result<Vec<_>>>()?;
    sort_scored(&mut out);
    Ok(out)
}

/// Returns at most `beam_width` utterances, best first.
pub fn beam_search(turn: Turn<'_>, params: &SearchParams) -> Result<Vec<ScoredUtterance>> {
    turn.validate()?;
    params.validate()?;
    beam_core(turn, params.beam_width, params.max_tokens, &|_| false)
}

/// Position-wise mismatch count, where every position past the end of the
/// shorter sequence counts as a mismatch.
pub fn hamming_dissimilarity(a: &[Token], b: &[Token]) -> usize {
    let shared = a.iter().zip(b).filter(|(x, y)| x != y).count();
    shared + a.len().abs_diff(b.len())
}

/// Candidates of each iterative-beam pass, in pass order.
///
/// From the second pass on, any hypothesis closer than
/// `similarity_threshold` to a candidate returned by an earlier pass is
/// dropped before ranking. A pass whose beam empties contributes nothing.
pub fn iterative_beam_search_by_iteration(
    turn: Turn<'_>,
    params: &SearchParams,
) -> Result<Vec<Vec<ScoredUtterance>>> {
    turn.validate()?;
    params.validate()?;
    let mut returned: Vec<Vec<Token>> = Vec::new();
    let mut passes = Vec::with_capacity(params.iterations);
    for pass in 0..params.iterations {
        let threshold = params.similarity_threshold;
        let reject = |tokens: &[Token]| {
            pass > 0
                && returned
                    .iter()
                    .any(|c| hamming_dissimilarity(tokens, c) < threshold)
        };
        let found = beam_core(turn, params.beam_width, params.max_tokens, &reject)?;
        if pass == 0 && found.is_empty() {
            return Err(Error::Search("first beam pass produced no candidates".into()));
        }
        returned.extend(found.iter().map(|c| c.utterance.tokens.clone()));
        passes.push(found);
    }
    Ok(passes)
}

/// Union of all iterative-beam passes, deduplicated and sorted best first.
pub fn iterative_beam_search(turn: Turn<'_>, params: &SearchParams) -> Result<Vec<ScoredUtterance>> {
    let passes = iterative_beam_search_by_iteration(turn, params)?;
    let mut out: Vec<ScoredUtterance> = Vec::new();
    for cand in passes.into_iter().flatten() {
        if !out.iter().any(|c| c.utterance.tokens == cand.utterance.tokens) {
            out.push(cand);
        }
    }
    sort_scored(&mut out);
    Ok(out)
}

/// Utterance-level algorithm plugged into multi-turn search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UtteranceAlgorithm {
    #[serde(rename = "beam")]
    Beam,
    #[serde(rename = "iterbeam")]
    IterativeBeam,
}

impl UtteranceAlgorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            UtteranceAlgorithm::Beam => "beam",
            UtteranceAlgorithm::IterativeBeam => "iterbeam",
        }
    }

    pub fn run(self, turn: Turn<'_>, params: &SearchParams) -> Result<Vec<ScoredUtterance>> {
        match self {
            UtteranceAlgorithm::Beam => beam_search(turn, params),
            UtteranceAlgorithm::IterativeBeam => iterative_beam_search(turn, params),
        }
    }
}

impl fmt::Display for UtteranceAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UtteranceAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beam" => Ok(Self::Beam),
            "iterbeam" | "iterative-beam" | "iterative_beam" => Ok(Self::IterativeBeam),
            other => Err(Error::Config(format!("unknown utterance algorithm `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{utterance_logprob, TabularModel};

    fn chain() -> TabularModel {
        TabularModel::from_json(
            r#"{"vocab":["a","b","</s>"],"eos":"</s>","contexts":{"k":{
                "START":[1,0,0],"a":[0,1,0],"b":[0,0,1]}}}"#,
        )
        .unwrap()
    }

    fn uniform() -> TabularModel {
        let third = 1.0 / 3.0;
        let row = format!("[{third},{third},{third}]");
        TabularModel::from_json(&format!(
            r#"{{"vocab":["a","b","</s>"],"eos":"</s>","contexts":{{"k":{{"START":{row},"a":{row},"b":{row}}}}}}}"#
        ))
        .unwrap()
    }

    fn self_ctx() -> Context {
        Context::keyed(SpeakerRole::SelfSpeaker, "c1")
    }

    #[test]
    fn greedy_follows_f1_argmax_rows() {
        let m = fixtures::f1();
        let ctx = self_ctx();
        let out = greedy_search(Turn::new(&m, &ctx, &[], SpeakerRole::SelfSpeaker), 3).unwrap();
        assert_eq!(m.vocabulary().decode(out.tokens()), "a b </s>");
        assert!((out.logprob - 3.0 * 0.6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn greedy_on_chain_and_uniform() {
        let m = chain();
        let ctx = Context::empty(SpeakerRole::SelfSpeaker);
        let out = greedy_search(Turn::new(&m, &ctx, &[], SpeakerRole::SelfSpeaker), 10).unwrap();
        assert_eq!(m.vocabulary().decode(out.tokens()), "a b </s>");
        assert_eq!(out.logprob, 0.0);

        let u = uniform();
        let out = greedy_search(Turn::new(&u, &ctx, &[], SpeakerRole::SelfSpeaker), 4).unwrap();
        assert_eq!(u.vocabulary().decode(out.tokens()), "a a a a");
        assert!(out.utterance.truncated);
    }

    #[test]
    fn width_one_beam_is_greedy() {
        let m = fixtures::f2();
        let ctx = Context::keyed(SpeakerRole::SelfSpeaker, "c1");
        let turn = Turn::new(&m, &ctx, &[], SpeakerRole::SelfSpeaker);
        let params = SearchParams {
            beam_width: 1,
            max_tokens: 5,
            ..SearchParams::default()
        };
        let beam = beam_search(turn, &params).unwrap();
        assert_eq!(beam.len(), 1);
        assert_eq!(beam[0], greedy_search(turn, 5).unwrap());
    }

    #[test]
    fn chain_beam_has_one_candidate() {
        let m = chain();
        let ctx = Context::empty(SpeakerRole::SelfSpeaker);
        let params = SearchParams {
            beam_width: 5,
            max_tokens: 10,
            ..SearchParams::default()
        };
        let out = beam_search(Turn::new(&m, &ctx, &[], SpeakerRole::SelfSpeaker), &params).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].logprob, 0.0);
    }

    #[test]
    fn beam_scores_rescore_exactly() {
        let m = fixtures::f2();
        let ctx = Context::keyed(SpeakerRole::SelfSpeaker, "c1");
        let params = SearchParams {
            beam_width: 7,
            max_tokens: 4,
            ..SearchParams::default()
        };
        let out = beam_search(Turn::new(&m, &ctx, &[], SpeakerRole::SelfSpeaker), &params).unwrap();
        for c in &out {
            assert_eq!(utterance_logprob(&m, &[], &ctx, c.tokens()).unwrap(), c.logprob);
        }
    }

    #[test]
    fn wrong_speaker_is_rejected() {
        let m = fixtures::f1();
        let ctx = self_ctx();
        assert!(matches!(
            greedy_search(Turn::new(&m, &ctx, &[], SpeakerRole::Partner), 3),
            Err(Error::WrongSpeaker { .. })
        ));
    }

    #[test]
    fn dissimilarity_pads_with_mismatches() {
        let t = |v: &[u32]| v.iter().map(|&i| Token(i)).collect::<Vec<_>>();
        assert_eq!(hamming_dissimilarity(&t(&[0, 1, 2]), &t(&[0, 1, 2])), 0);
        assert_eq!(hamming_dissimilarity(&t(&[0, 1]), &t(&[0, 1, 2])), 1);
        assert_eq!(hamming_dissimilarity(&t(&[1, 1]), &t(&[0, 1, 2, 2])), 3);
        assert_eq!(hamming_dissimilarity(&[], &t(&[0])), 1);
    }

    #[test]
    fn single_pass_iterative_equals_beam() {
        let m = fixtures::f1();
        let ctx = self_ctx();
        let turn = Turn::new(&m, &ctx, &[], SpeakerRole::SelfSpeaker);
        let params = SearchParams {
            beam_width: 3,
            max_tokens: 3,
            iterations: 1,
            similarity_threshold: 2,
        };
        assert_eq!(iterative_beam_search(turn, &params).unwrap(), beam_search(turn, &params).unwrap());
    }

    #[test]
    fn zero_threshold_never_prunes() {
        let m = fixtures::f1();
        let ctx = self_ctx();
        let turn = Turn::new(&m, &ctx, &[], SpeakerRole::SelfSpeaker);
        let params = SearchParams {
            beam_width: 3,
            max_tokens: 3,
            iterations: 4,
            similarity_threshold: 0,
        };
        let passes = iterative_beam_search_by_iteration(turn, &params).unwrap();
        assert!(passes.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(iterative_beam_search(turn, &params).unwrap(), beam_search(turn, &params).unwrap());
    }

    #[test]
    fn algorithm_names_parse() {
        assert_eq!("beam".parse::<UtteranceAlgorithm>().unwrap(), UtteranceAlgorithm::Beam);
        assert_eq!(
            "iterbeam".parse::<UtteranceAlgorithm>().unwrap(),
            UtteranceAlgorithm::IterativeBeam
        );
        assert!("sample".parse::<UtteranceAlgorithm>().is_err());
    }
}
