//! JSONL dialogue corpus: one conversation per line,
//! `{"self_persona": [..], "partner_persona": [..], "turns": [{"speaker": "self"|"partner", "text": ".."}]}`.

use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::conversation::{Context, Conversation, SpeakerRole, Utterance};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusTurn {
    pub speaker: SpeakerRole,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(default)]
    pub self_persona: Vec<String>,
    #[serde(default)]
    pub partner_persona: Vec<String>,
    pub turns: Vec<CorpusTurn>,
    /// 1-based source line; 0 when not read from a file.
    #[serde(skip)]
    pub line: usize,
}

/// Parses every non-blank line; errors carry the 1-based line number.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<CorpusRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Ingestion {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.line = i + 1;
        out.push(record);
    }
    Ok(out)
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusRecord>> {
    read_corpus(text.as_bytes())
}

/// Every whitespace token in turns and personas, sorted, followed by eos.
pub fn build_vocabulary(records: &[CorpusRecord], eos: &str) -> Result<Vocabulary> {
    let mut words = BTreeSet::new();
    for r in records {
        let texts = r
            .self_persona
            .iter()
            .chain(&r.partner_persona)
            .chain(r.turns.iter().map(|t| &t.text));
        for text in texts {
            for w in text.split_whitespace() {
                if w != eos {
                    words.insert(w.to_string());
                }
            }
        }
    }
    Vocabulary::new(words.into_iter().chain(std::iter::once(eos.to_string())), eos)
}

impl CorpusRecord {
    pub fn to_conversation(&self, vocab: &Vocabulary) -> Result<Conversation> {
        let persona = |owner, lines: &[String]| -> Result<Context> {
            let lines = lines
                .iter()
                .map(|l| vocab.encode(l))
                .collect::<Result<Vec<_>>>()?;
            Ok(Context::with_lines(owner, lines))
        };
        let mut conv = Conversation::new(
            persona(SpeakerRole::SelfSpeaker, &self.self_persona)?,
            persona(SpeakerRole::Partner, &self.partner_persona)?,
        );
        for turn in &self.turns {
            conv.push(Utterance::from_text(turn.speaker, &turn.text, vocab)?)?;
        }
        Ok(conv)
    }
}

/// Converts every record, reporting the first failure with its source
/// line (or 1-based record index for records not read from a file).
pub fn to_conversations(records: &[CorpusRecord], vocab: &Vocabulary) -> Result<Vec<Conversation>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_conversation(vocab).map_err(|e| Error::Ingestion {
                line: if r.line > 0 { r.line } else { i + 1 },
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{"self_persona":["i like dogs"],"partner_persona":["i like cats"],"turns":[{"speaker":"self","text":"hi there"},{"speaker":"partner","text":"hello"}]}

{"turns":[{"speaker":"self","text":"hello"}]}
"#;

    #[test]
    fn parses_and_builds_vocabulary() {
        let records = parse_corpus(SAMPLE).unwrap();
        assert_eq!(records.len(), 2);
        let v = build_vocabulary(&records, "</s>").unwrap();
        assert_eq!(v.eos_surface(), "</s>");
        assert!(v.id("cats").is_some());
        let convs = to_conversations(&records, &v).unwrap();
        assert_eq!(convs[0].utterances.len(), 2);
        assert_eq!(convs[0].self_context.lines.len(), 1);
    }

    #[test]
    fn bad_line_reports_line_number() {
        let text = "{\"turns\":[]}\nnot json\n";
        match parse_corpus(text) {
            Err(Error::Ingestion { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oov_and_alternation_errors() {
        let records = parse_corpus(SAMPLE).unwrap();
        let v = Vocabulary::new(["hello", "</s>"], "</s>").unwrap();
        match to_conversations(&records, &v) {
            Err(Error::Ingestion { line: 1, message }) => assert!(message.contains("dogs")),
            other => panic!("unexpected {other:?}"),
        }
        let bad = parse_corpus("\n{\"turns\":[{\"speaker\":\"partner\",\"text\":\"hello\"}]}").unwrap();
        match to_conversations(&bad, &v) {
            Err(Error::Ingestion { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
