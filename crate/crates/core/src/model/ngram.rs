use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::SpeakerModel;
use crate::conversation::{Context, Conversation, SpeakerRole, Utterance};
use crate::error::{Error, Result};
use crate::vocab::{Token, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NGramConfig {
    /// Number of preceding tokens conditioned on.
    pub order: usize,
    /// Additive smoothing constant.
    pub alpha: f64,
    /// Prefix each speaker's persona tokens to the conditioning stream.
    /// Off for context-free (mindless) partner models.
    pub use_context: bool,
}

impl Default for NGramConfig {
    fn default() -> Self {
        Self {
            order: 2,
            alpha: 0.1,
            use_context: true,
        }
    }
}

// `None` pads histories that reach back before the start of the stream.
type HistoryKey = Vec<Option<Token>>;

#[derive(Clone, Debug, Default, PartialEq)]
struct CountRow {
    counts: Vec<u64>,
    total: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct CountTable {
    rows: HashMap<HistoryKey, CountRow>,
}

/// Additively smoothed n-gram model with separate counts per speaker role.
///
/// The conditioning stream is the owner's persona tokens (when
/// `use_context`), every earlier utterance, then the partial utterance.
/// Which role's counts are used follows `Context::owner`, so the self
/// model conditioned on a partner persona speaks with partner statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramModel {
    vocab: Vocabulary,
    config: NGramConfig,
    tables: [CountTable; 2],
}

fn role_slot(role: SpeakerRole) -> usize {
    match role {
        SpeakerRole::SelfSpeaker => 0,
        SpeakerRole::Partner => 1,
    }
}

fn history_key(stream: &[Token], order: usize) -> HistoryKey {
    let mut key = vec![None; order];
    let take = stream.len().min(order);
    for (slot, &t) in key[order - take..]
        .iter_mut()
        .zip(&stream[stream.len() - take..])
    {
        *slot = Some(t);
    }
    key
}

fn stream_prefix(context: Option<&Context>, history: &[Utterance]) -> Vec<Token> {
    let mut stream: Vec<Token> = context.map(|c| c.flat_tokens().collect()).unwrap_or_default();
    for u in history {
        stream.extend_from_slice(&u.tokens);
    }
    stream
}

/// Counts every (history, token) event of every utterance in `corpus`,
/// filed under the utterance's speaker role.
pub fn fit_ngram(corpus: &[Conversation], vocab: &Vocabulary, config: NGramConfig) -> Result<NGramModel> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot fit on an empty corpus".into()));
    }
    if config.order < 1 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    if !(config.alpha > 0.0 && config.alpha.is_finite()) {
        return Err(Error::Config(format!("smoothing constant must be > 0, got {}", config.alpha)));
    }
    let mut tables: [CountTable; 2] = Default::default();
    for (line, conv) in corpus.iter().enumerate() {
        conv.validate(vocab).map_err(|e| Error::Ingestion {
            line: line + 1,
            message: e.to_string(),
        })?;
        for (m, u) in conv.utterances.iter().enumerate() {
            let ctx = config.use_context.then(|| conv.context_for(u.speaker));
            let mut stream = stream_prefix(ctx, &conv.utterances[..m]);
            let table = &mut tables[role_slot(u.speaker)];
            for &tok in &u.tokens {
                let row = table
                    .rows
                    .entry(history_key(&stream, config.order))
                    .or_insert_with(|| CountRow {
                        counts: vec![0; vocab.len()],
                        total: 0,
                    });
                row.counts[tok.index()] += 1;
                row.total += 1;
                stream.push(tok);
            }
        }
    }
    Ok(NGramModel {
        vocab: vocab.clone(),
        config,
        tables,
    })
}

impl NGramModel {
    pub fn config(&self) -> NGramConfig {
        self.config
    }

    /// Smoothed probability of `token` after `history` (padded with `None`)
    /// for `role`.
    pub fn probability(&self, role: SpeakerRole, history: &[Option<Token>], token: Token) -> f64 {
        let v = self.vocab.len() as f64;
        let alpha = self.config.alpha;
        match self.tables[role_slot(role)].rows.get(history) {
            Some(row) => (row.counts[token.index()] as f64 + alpha) / (row.total as f64 + alpha * v),
            None => 1.0 / v,
        }
    }

    pub fn to_file(&self) -> NGramFile {
        let encode_table = |table: &CountTable| {
            let mut rows: Vec<NGramRow> = table
                .rows
                .iter()
                .map(|(key, row)| NGramRow {
                    history: key
                        .iter()
                        .map(|t| t.map(|t| self.vocab.surface(t).unwrap().to_string()))
                        .collect(),
                    counts: row
                        .counts
                        .iter()
                        .enumerate()
                        .filter(|(_, &c)| c > 0)
                        .map(|(i, &c)| (self.vocab.surfaces()[i].clone(), c))
                        .collect(),
                })
                .collect();
            rows.sort_by(|a, b| a.history.cmp(&b.history));
            rows
        };
        NGramFile {
            kind: NGramKind::Ngram,
            vocab: self.vocab.surfaces().to_vec(),
            eos: self.vocab.eos_surface().to_string(),
            order: self.config.order,
            alpha: self.config.alpha,
            use_context: self.config.use_context,
            self_rows: encode_table(&self.tables[0]),
            partner_rows: encode_table(&self.tables[1]),
        }
    }

    pub fn from_file(file: NGramFile) -> Result<Self> {
        let vocab = Vocabulary::new(file.vocab.iter().cloned(), &file.eos)?;
        let config = NGramConfig {
            order: file.order,
            alpha: file.alpha,
            use_context: file.use_context,
        };
        if config.order < 1 || !(config.alpha > 0.0 && config.alpha.is_finite()) {
            return Err(Error::Model("n-gram order must be >= 1 and alpha > 0".into()));
        }
        let decode_table = |rows: &[NGramRow]| -> Result<CountTable> {
            let mut table = CountTable::default();
            for row in rows {
                if row.history.len() != config.order {
                    return Err(Error::Model(format!(
                        "history of length {} in an order-{} model",
                        row.history.len(),
                        config.order
                    )));
                }
                let key = row
                    .history
                    .iter()
                    .map(|s| match s {
                        None => Ok(None),
                        Some(s) => vocab
                            .id(s)
                            .map(Some)
                            .ok_or_else(|| Error::OutOfVocabulary(vec![s.clone()])),
                    })
                    .collect::<Result<HistoryKey>>()?;
                let mut counts = vec![0; vocab.len()];
                for (s, &c) in &row.counts {
                    let t = vocab.id(s).ok_or_else(|| Error::OutOfVocabulary(vec![s.clone()]))?;
                    counts[t.index()] = c;
                }
                let total = counts.iter().sum();
                table.rows.insert(key, CountRow { counts, total });
            }
            Ok(table)
        };
        Ok(Self {
            tables: [decode_table(&file.self_rows)?, decode_table(&file.partner_rows)?],
            vocab,
            config,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NGramFile =
            serde_json::from_str(text).map_err(|e| Error::Model(format!("n-gram model: {e}")))?;
        Self::from_file(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("n-gram file serializes")
    }
}

impl SpeakerModel for NGramModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token_logprobs(
        &self,
        history: &[Utterance],
        context: &Context,
        partial: &[Token],
    ) -> Result<Vec<f64>> {
        let ctx = self.config.use_context.then_some(context);
        let mut stream = stream_prefix(ctx, history);
        stream.extend_from_slice(partial);
        let key = history_key(&stream, self.config.order);
        Ok(self
            .vocab
            .tokens()
            .map(|t| self.probability(context.owner, &key, t).ln())
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NGramKind {
    Ngram,
}

/// On-disk form of an [`NGramModel`]; `null` in a history marks padding
/// before the stream start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NGramFile {
    pub kind: NGramKind,
    pub vocab: Vec<String>,
    pub eos: String,
    pub order: usize,
    pub alpha: f64,
    pub use_context: bool,
    #[serde(rename = "self")]
    pub self_rows: Vec<NGramRow>,
    #[serde(rename = "partner")]
    pub partner_rows: Vec<NGramRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NGramRow {
    pub history: Vec<Option<String>>,
    pub counts: BTreeMap<String, u64>,
}
