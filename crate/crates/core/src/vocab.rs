use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a surface string in a [`Vocabulary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u32);

impl Token {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Ordered set of unique surface strings with one designated
/// end-of-utterance token.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, Token>,
    eos: Token,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.eos == other.eos && self.tokens == other.tokens
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>, eos: &str) -> Result<Self> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(Error::Vocabulary("no tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, surface) in tokens.iter().enumerate() {
            if surface.is_empty() || surface.chars().any(char::is_whitespace) {
                return Err(Error::Vocabulary(format!(
                    "token {surface:?} is empty or contains whitespace"
                )));
            }
            if index.insert(surface.clone(), Token(i as u32)).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {surface:?}")));
            }
        }
        let eos = *index
            .get(eos)
            .ok_or_else(|| Error::Vocabulary(format!("eos token {eos:?} not in vocabulary")))?;
        Ok(Self { tokens, index, eos })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> Token {
        self.eos
    }

    pub fn eos_surface(&self) -> &str {
        &self.tokens[self.eos.index()]
    }

    pub fn surfaces(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, surface: &str) -> Option<Token> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, token: Token) -> Option<&str> {
        self.tokens.get(token.index()).map(String::as_str)
    }

    pub fn tokens(&self) -> impl Iterator<Item = Token> + '_ {
        (0..self.tokens.len() as u32).map(Token)
    }

    pub fn check(&self, token: Token) -> Result<()> {
        if token.index() < self.len() {
            Ok(())
        } else {
            Err(Error::TokenOutOfRange {
                id: token.0,
                size: self.len(),
            })
        }
    }

    /// Whitespace-tokenizes `text`. Every unknown word is reported in the
    /// error, in order of appearance.
    pub fn encode(&self, text: &str) -> Result<Vec<Token>> {
        let mut out = Vec::new();
        let mut unknown = Vec::new();
        for word in text.split_whitespace() {
            match self.id(word) {
                Some(t) => out.push(t),
                None => unknown.push(word.to_string()),
            }
        }
        if unknown.is_empty() {
            Ok(out)
        } else {
            Err(Error::OutOfVocabulary(unknown))
        }
    }

    pub fn decode(&self, tokens: &[Token]) -> String {
        tokens
            .iter()
            .map(|&t| self.surface(t).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
