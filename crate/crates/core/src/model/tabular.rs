use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{checked_row, SpeakerModel};
use crate::conversation::{Context, Utterance};
use crate::error::{Error, Result};
use crate::vocab::{Token, Vocabulary};

/// Row key used before any non-eos token has been seen.
pub const START_ROW: &str = "START";

/// On-disk form of a tabular model.
///
/// `contexts` maps a context key to rows keyed by `START` or a token
/// surface; each row is a probability vector over `vocab`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSpec {
    pub vocab: Vec<String>,
    pub eos: String,
    pub contexts: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

impl TabularSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Model(format!("tabular model: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tabular spec serializes")
    }
}

#[derive(Debug)]
struct ContextTable {
    start: Vec<f64>,
    // indexed by conditioning token; None for eos
    rows: Vec<Option<Vec<f64>>>,
}

/// First-order table model.
///
/// The distribution depends only on the context key and on the most recent
/// non-eos token in the conversation stream (history followed by the
/// partial utterance), or `START` when there is none. Skipping eos lets a
/// response depend on how the previous utterance ended.
#[derive(Debug)]
pub struct TabularModel {
    vocab: Vocabulary,
    tables: BTreeMap<String, ContextTable>,
    spec: TabularSpec,
}

impl TabularModel {
    pub fn from_spec(spec: TabularSpec) -> Result<Self> {
        let vocab = Vocabulary::new(spec.vocab.iter().cloned(), &spec.eos)?;
        if spec.contexts.is_empty() {
            return Err(Error::Model("no contexts".into()));
        }
        let mut tables = BTreeMap::new();
        for (key, rows) in &spec.contexts {
            let mut start = None;
            let mut by_token: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
            for (row_key, probs) in rows {
                if probs.len() != vocab.len() {
                    return Err(Error::Model(format!(
                        "context {key}, row {row_key}: {} entries for {} tokens",
                        probs.len(),
                        vocab.len()
                    )));
                }
                checked_row(probs, &format!("context {key}, row {row_key}"))?;
                let logs: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
                if row_key == START_ROW {
                    start = Some(logs);
                } else {
                    let tok = vocab.id(row_key).ok_or_else(|| {
                        Error::Model(format!("context {key}: unknown row key {row_key:?}"))
                    })?;
                    // An eos row is legal in the file but never consulted.
                    if tok != vocab.eos() {
                        by_token[tok.index()] = Some(logs);
                    }
                }
            }
            let start = start
                .ok_or_else(|| Error::Model(format!("context {key}: missing {START_ROW} row")))?;
            for tok in vocab.tokens() {
                if tok != vocab.eos() && by_token[tok.index()].is_none() {
                    return Err(Error::Model(format!(
                        "context {key}: missing row for {:?}",
                        vocab.surface(tok).unwrap()
                    )));
                }
            }
            tables.insert(
                key.clone(),
                ContextTable {
                    start,
                    rows: by_token,
                },
            );
        }
        Ok(Self {
            vocab,
            tables,
            spec,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(TabularSpec::from_json(text)?)
    }

    pub fn spec(&self) -> &TabularSpec {
        &self.spec
    }

    pub fn context_keys(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    fn table(&self, context: &Context) -> Result<&ContextTable> {
        match &context.key {
            Some(k) => self
                .tables
                .get(k)
                .ok_or_else(|| Error::UnknownContext(k.clone())),
            None if self.tables.len() == 1 => Ok(self.tables.values().next().unwrap()),
            None => Err(Error::Config(format!(
                "model has {} contexts, a context key is required",
                self.tables.len()
            ))),
        }
    }

    fn conditioning_token(&self, history: &[Utterance], partial: &[Token]) -> Option<Token> {
        let eos = self.vocab.eos();
        partial
            .iter()
            .rev()
            .chain(history.iter().rev().flat_map(|u| u.tokens.iter().rev()))
            .copied()
            .find(|&t| t != eos)
    }
}

impl SpeakerModel for TabularModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token_logprobs(
        &self,
        history: &[Utterance],
        context: &Context,
        partial: &[Token],
    ) -> Result<Vec<f64>> {
        let table = self.table(context)?;
        match self.conditioning_token(history, partial) {
            None => Ok(table.start.clone()),
            Some(t) => {
                self.vocab.check(t)?;
                Ok(table.rows[t.index()].clone().expect("non-eos rows are complete"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversation::SpeakerRole;
    use crate::fixtures;

    #[test]
    fn f1_rows() {
        let m = fixtures::f1();
        let ctx = Context::keyed(SpeakerRole::SelfSpeaker, "c1");
        let v = m.vocabulary();
        let start = m.next_token_logprobs(&[], &ctx, &[]).unwrap();
        assert!((start[v.id("a").unwrap().index()] - 0.6f64.ln()).abs() < 1e-15);
        let after_b = m
            .next_token_logprobs(&[], &ctx, &[v.id("b").unwrap()])
            .unwrap();
        assert!((after_b[v.eos().index()] - 0.6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn skips_eos_when_conditioning_on_history() {
        let m = fixtures::f1();
        let v = m.vocabulary();
        let ctx = Context::keyed(SpeakerRole::Partner, "c1");
        let hist = vec![Utterance::from_text(SpeakerRole::SelfSpeaker, "b a", v).unwrap()];
        let got = m.next_token_logprobs(&hist, &ctx, &[]).unwrap();
        let want = m.next_token_logprobs(&[], &ctx, &[v.id("a").unwrap()]).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad_sum = r#"{"vocab":["a","</s>"],"eos":"</s>","contexts":{"k":{"START":[0.5,0.6],"a":[0.5,0.5]}}}"#;
        assert!(TabularModel::from_json(bad_sum).is_err());
        let missing = r#"{"vocab":["a","</s>"],"eos":"</s>","contexts":{"k":{"START":[0.5,0.5]}}}"#;
        assert!(TabularModel::from_json(missing).is_err());
        let negative = r#"{"vocab":["a","</s>"],"eos":"</s>","contexts":{"k":{"START":[1.5,-0.5],"a":[0.5,0.5]}}}"#;
        assert!(TabularModel::from_json(negative).is_err());
        let width = r#"{"vocab":["a","</s>"],"eos":"</s>","contexts":{"k":{"START":[1.0],"a":[0.5,0.5]}}}"#;
        assert!(TabularModel::from_json(width).is_err());
    }

    #[test]
    fn context_resolution() {
        let m = fixtures::f2();
        assert!(matches!(
            m.next_token_logprobs(&[], &Context::empty(SpeakerRole::Partner), &[]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            m.next_token_logprobs(&[], &Context::keyed(SpeakerRole::Partner, "nope"), &[]),
            Err(Error::UnknownContext(_))
        ));
        // single-context models accept an empty context
        let f1 = fixtures::f1();
        f1.next_token_logprobs(&[], &Context::empty(SpeakerRole::Partner), &[])
            .unwrap();
    }
}
