//! Sessions and their append-only JSONL event logs.
//!
//! A session file holds one `created` event followed by one `utterance`
//! event per turn; replaying the events rebuilds the session exactly.
//! Every mutation is written and synced before the caller sees it.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, TryLockError};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use turnbeam_core::conversation::{Context, Conversation, SpeakerRole, Utterance};
use turnbeam_core::SearchTrace;

use crate::engine::EngineConfig;
use crate::error::{ServiceError, ServiceResult};
use crate::registry::Registry;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub config: EngineConfig,
    pub conversation: Conversation,
    /// One per self utterance, in order.
    pub traces: Vec<SearchTrace>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        id: String,
        config: EngineConfig,
        self_context: Context,
        partner_context: Context,
        at: DateTime<Utc>,
    },
    Utterance {
        utterance: Utterance,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trace: Option<SearchTrace>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        logprob: Option<f64>,
        at: DateTime<Utc>,
    },
}

impl Session {
    pub fn replay(events: impl IntoIterator<Item = Event>) -> ServiceResult<Session> {
        let mut events = events.into_iter();
        let mut session = match events.next() {
            Some(Event::Created {
                id,
                config,
                self_context,
                partner_context,
                at,
            }) => Session {
                id,
                config,
                conversation: Conversation::new(self_context, partner_context),
                traces: Vec::new(),
                created_at: at,
                updated_at: at,
            },
            _ => return Err(ServiceError::Storage("event log does not start with `created`".into())),
        };
        for event in events {
            match event {
                Event::Created { .. } => {
                    return Err(ServiceError::Storage("duplicate `created` event".into()))
                }
                Event::Utterance {
                    utterance, trace, at, ..
                } => session.apply(utterance, trace, at)?,
            }
        }
        Ok(session)
    }

    fn apply(&mut self, utterance: Utterance, trace: Option<SearchTrace>, at: DateTime<Utc>) -> ServiceResult<()> {
        if (utterance.speaker == SpeakerRole::SelfSpeaker) != trace.is_some() {
            return Err(ServiceError::Storage("every self utterance carries exactly one trace".into()));
        }
        self.conversation.push(utterance)?;
        self.traces.extend(trace);
        self.updated_at = at;
        Ok(())
    }

    pub fn transcript(&self, vocab: &turnbeam_core::Vocabulary) -> Vec<TranscriptLine> {
        self.conversation
            .utterances
            .iter()
            .map(|u| TranscriptLine {
                speaker: u.speaker,
                text: vocab.decode(&u.tokens),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub speaker: SpeakerRole,
    pub text: String,
}

/// The engine's answer to a partner utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    /// Index of the trace for this reply.
    pub turn: usize,
    pub utterance: Utterance,
    pub text: String,
    pub logprob: f64,
}

type Shared = Arc<Mutex<Session>>;

pub struct SessionStore {
    registry: Arc<Registry>,
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Shared>>,
}

fn read_events(path: &Path) -> ServiceResult<Vec<Event>> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| ServiceError::Storage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        events.push(event);
    }
    Ok(events)
}

/// Replays one session log.
pub fn load_session(path: &Path) -> ServiceResult<Session> {
    Session::replay(read_events(path)?)
}

impl SessionStore {
    /// Sessions kept in memory only.
    pub fn in_memory(registry: Arc<Registry>) -> Self {
        Self {
            registry,
            dir: None,
            sessions: RwLock::default(),
        }
    }

    /// Persists under `dir`, replaying any logs already there.
    pub fn open(registry: Arc<Registry>, dir: &Path) -> ServiceResult<Self> {
        fs::create_dir_all(dir)?;
        let mut sessions = HashMap::new();
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let session = load_session(&path)?;
            sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
        }
        Ok(Self {
            registry,
            dir: Some(dir.to_path_buf()),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    fn append(&self, id: &str, events: &[Event], create: bool) -> ServiceResult<()> {
        let Some(path) = self.log_path(id) else {
            return Ok(());
        };
        let mut file = OpenOptions::new()
            .append(true)
            .create_new(create)
            .open(&path)?;
        let mut buf = Vec::new();
        for event in events {
            serde_json::to_writer(&mut buf, event).map_err(|e| ServiceError::Internal(e.to_string()))?;
            buf.push(b'\n');
        }
        file.write_all(&buf)?;
        file.sync_data()?;
        Ok(())
    }

    fn shared(&self, id: &str) -> ServiceResult<Shared> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("session `{id}`")))
    }

    /// Creates a session; the engine speaks first.
    pub fn create(&self, config: EngineConfig) -> ServiceResult<Session> {
        let engine = config.resolve(&self.registry)?;
        let id = uuid::Uuid::new_v4().to_string();
        let (reply, trace) = engine.respond(&[])?;
        let at = Utc::now();
        let events = [
            Event::Created {
                id: id.clone(),
                config,
                self_context: engine.self_context.clone(),
                partner_context: engine.partner_context.clone(),
                at,
            },
            Event::Utterance {
                utterance: reply.utterance,
                trace: Some(trace),
                logprob: Some(reply.logprob),
                at,
            },
        ];
        let session = Session::replay(events.iter().cloned())?;
        self.append(&id, &events, true)?;
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id, Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    pub fn get(&self, id: &str) -> ServiceResult<Session> {
        let shared = self.shared(id)?;
        let session = shared.lock().expect("session poisoned");
        Ok(session.clone())
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session map poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Records a partner utterance and the engine's reply. A session that
    /// is already handling a request answers with a conflict.
    pub fn post_utterance(&self, id: &str, text: &str) -> ServiceResult<Reply> {
        let shared = self.shared(id)?;
        let mut session = match shared.try_lock() {
            Ok(guard) => guard,
            Err(TryLockError::WouldBlock) => {
                return Err(ServiceError::Conflict(format!("session `{id}` is busy with another turn")))
            }
            Err(TryLockError::Poisoned(_)) => return Err(ServiceError::Internal("session poisoned".into())),
        };
        if session.conversation.next_speaker() != SpeakerRole::Partner {
            return Err(ServiceError::Conflict("it is not the partner's turn".into()));
        }
        let engine = session.config.resolve(&self.registry)?;
        let partner = Utterance::from_text(SpeakerRole::Partner, text, engine.vocabulary())?;
        let mut history = session.conversation.utterances.clone();
        history.push(partner.clone());
        let (reply, trace) = engine.respond(&history)?;
        let at = Utc::now();
        let events = [
            Event::Utterance {
                utterance: partner,
                trace: None,
                logprob: None,
                at,
            },
            Event::Utterance {
                utterance: reply.utterance.clone(),
                trace: Some(trace),
                logprob: Some(reply.logprob),
                at,
            },
        ];
        let mut next = session.clone();
        for event in events.iter().cloned() {
            if let Event::Utterance {
                utterance, trace, at, ..
            } = event
            {
                next.apply(utterance, trace, at)?;
            }
        }
        self.append(id, &events, false)?;
        *session = next;
        Ok(Reply {
            turn: session.traces.len() - 1,
            text: engine.vocabulary().decode(&reply.utterance.tokens),
            utterance: reply.utterance,
            logprob: reply.logprob,
        })
    }

    /// Runs `f` while holding the session's exclusive lock.
    pub fn with_session_locked<T>(&self, id: &str, f: impl FnOnce() -> T) -> ServiceResult<T> {
        let shared = self.shared(id)?;
        let _guard = shared.lock().expect("session poisoned");
        Ok(f())
    }

    pub fn trace(&self, id: &str, turn: usize) -> ServiceResult<SearchTrace> {
        let session = self.get(id)?;
        session
            .traces
            .get(turn)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("trace {turn} of session `{id}`")))
    }
}
