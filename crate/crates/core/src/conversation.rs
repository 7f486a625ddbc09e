use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{Token, Vocabulary};

/// Which side of the conversation an utterance or context belongs to.
///
/// `SelfSpeaker` is the speaker being decoded for; it always opens the
/// conversation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerRole {
    #[serde(rename = "self")]
    SelfSpeaker,
    Partner,
}

impl SpeakerRole {
    pub fn complement(self) -> Self {
        match self {
            SpeakerRole::SelfSpeaker => SpeakerRole::Partner,
            SpeakerRole::Partner => SpeakerRole::SelfSpeaker,
        }
    }

    /// The speaker due after `history_len` alternating utterances.
    pub fn next_after(history_len: usize) -> Self {
        if history_len.is_multiple_of(2) {
            SpeakerRole::SelfSpeaker
        } else {
            SpeakerRole::Partner
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpeakerRole::SelfSpeaker => "self",
            SpeakerRole::Partner => "partner",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: SpeakerRole,
    pub tokens: Vec<Token>,
    pub truncated: bool,
}

impl Utterance {
    /// Validates the eos placement and derives `truncated` from it.
    pub fn new(speaker: SpeakerRole, tokens: Vec<Token>, eos: Token) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Utterance("no tokens".into()));
        }
        if let Some(pos) = tokens.iter().position(|&t| t == eos) {
            if pos + 1 != tokens.len() {
                return Err(Error::Utterance(format!(
                    "eos at position {pos} of {}",
                    tokens.len()
                )));
            }
        }
        let truncated = *tokens.last().unwrap() != eos;
        Ok(Self {
            speaker,
            tokens,
            truncated,
        })
    }

    /// Parses whitespace-separated text, appending eos unless the text
    /// already ends with it.
    pub fn from_text(speaker: SpeakerRole, text: &str, vocab: &Vocabulary) -> Result<Self> {
        let mut tokens = vocab.encode(text)?;
        if tokens.last() != Some(&vocab.eos()) {
            tokens.push(vocab.eos());
        }
        Self::new(speaker, tokens, vocab.eos())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub(crate) fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        for &t in &self.tokens {
            vocab.check(t)?;
        }
        let eos = vocab.eos();
        let rebuilt = Utterance::new(self.speaker, self.tokens.clone(), eos)?;
        if rebuilt.truncated != self.truncated {
            return Err(Error::Utterance("truncated flag disagrees with eos".into()));
        }
        Ok(())
    }
}

/// Static persona description private to one speaker.
///
/// `key` names a discrete context for table-driven models; `lines` is the
/// token stream used by models that condition on persona text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub owner: SpeakerRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default)]
    pub lines: Vec<Vec<Token>>,
}

impl Context {
    pub fn empty(owner: SpeakerRole) -> Self {
        Self {
            owner,
            key: None,
            lines: Vec::new(),
        }
    }

    pub fn keyed(owner: SpeakerRole, key: impl Into<String>) -> Self {
        Self {
            owner,
            key: Some(key.into()),
            lines: Vec::new(),
        }
    }

    pub fn with_lines(owner: SpeakerRole, lines: Vec<Vec<Token>>) -> Self {
        Self {
            owner,
            key: None,
            lines,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.key.is_none() && self.lines.is_empty()
    }

    pub fn flat_tokens(&self) -> impl Iterator<Item = Token> + '_ {
        self.lines.iter().flatten().copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub utterances: Vec<Utterance>,
    pub self_context: Context,
    pub partner_context: Context,
}

impl Conversation {
    pub fn new(self_context: Context, partner_context: Context) -> Self {
        Self {
            utterances: Vec::new(),
            self_context,
            partner_context,
        }
    }

    pub fn next_speaker(&self) -> SpeakerRole {
        SpeakerRole::next_after(self.utterances.len())
    }

    /// Appends an utterance, enforcing strict alternation.
    pub fn push(&mut self, utterance: Utterance) -> Result<()> {
        let expected = self.next_speaker();
        if utterance.speaker != expected {
            return Err(Error::WrongSpeaker {
                expected,
                history_len: self.utterances.len(),
            });
        }
        self.utterances.push(utterance);
        Ok(())
    }

    pub fn context_for(&self, role: SpeakerRole) -> &Context {
        match role {
            SpeakerRole::SelfSpeaker => &self.self_context,
            SpeakerRole::Partner => &self.partner_context,
        }
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        check_alternation(&self.utterances)?;
        for u in &self.utterances {
            u.validate(vocab)?;
        }
        for ctx in [&self.self_context, &self.partner_context] {
            for t in ctx.flat_tokens() {
                vocab.check(t)?;
            }
        }
        Ok(())
    }
}

pub fn check_alternation(utterances: &[Utterance]) -> Result<()> {
    for (i, u) in utterances.iter().enumerate() {
        let expected = SpeakerRole::next_after(i);
        if u.speaker != expected {
            return Err(Error::Conversation(format!(
                "utterance {i} is by {}, expected {}",
                u.speaker.as_str(),
                expected.as_str()
            )));
        }
    }
    Ok(())
}
