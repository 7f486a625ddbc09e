//! Speaker models available to sessions and experiments: the built-in
//! fixtures plus every `*.json` file in a models directory, keyed by file
//! stem.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use turnbeam_core::conversation::{Context, Utterance};
use turnbeam_core::{fixtures, NGramModel, SpeakerModel, TabularModel, Token, Vocabulary};

use crate::error::{ServiceError, ServiceResult};

#[derive(Debug)]
pub enum LoadedModel {
    Tabular(TabularModel),
    NGram(NGramModel),
}

impl LoadedModel {
    /// Tells the formats apart by the n-gram file's `kind` field.
    pub fn from_json(text: &str) -> turnbeam_core::Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| turnbeam_core::Error::Model(e.to_string()))?;
        if value.get("kind").and_then(|k| k.as_str()) == Some("ngram") {
            Ok(Self::NGram(NGramModel::from_json(text)?))
        } else {
            Ok(Self::Tabular(TabularModel::from_json(text)?))
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LoadedModel::Tabular(_) => "tabular",
            LoadedModel::NGram(_) => "ngram",
        }
    }
}

impl SpeakerModel for LoadedModel {
    fn vocabulary(&self) -> &Vocabulary {
        match self {
            LoadedModel::Tabular(m) => m.vocabulary(),
            LoadedModel::NGram(m) => m.vocabulary(),
        }
    }

    fn next_token_logprobs(
        &self,
        history: &[Utterance],
        context: &Context,
        partial: &[Token],
    ) -> turnbeam_core::Result<Vec<f64>> {
        match self {
            LoadedModel::Tabular(m) => m.next_token_logprobs(history, context, partial),
            LoadedModel::NGram(m) => m.next_token_logprobs(history, context, partial),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelInfo {
    pub id: String,
    pub kind: &'static str,
    pub source: String,
    pub vocab: Vec<String>,
    pub eos: String,
    /// Context keys, table models only.
    pub contexts: Vec<String>,
    pub default_self_context: Option<String>,
    pub default_partner_context: Option<String>,
}

#[derive(Clone)]
pub struct RegisteredModel {
    pub model: Arc<LoadedModel>,
    pub info: ModelInfo,
}

#[derive(Clone, Default)]
pub struct Registry {
    models: BTreeMap<String, RegisteredModel>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `F1` and `F2`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        for name in fixtures::NAMES {
            let model = fixtures::by_name(name).expect("fixture exists");
            r.insert(name, LoadedModel::Tabular(model), "builtin".into());
        }
        r
    }

    /// Built-ins plus the models directory, if any.
    pub fn with_dir(dir: Option<&Path>) -> ServiceResult<Self> {
        let mut r = Self::builtin();
        if let Some(dir) = dir {
            r.load_dir(dir)?;
        }
        Ok(r)
    }

    pub fn load_dir(&mut self, dir: &Path) -> ServiceResult<()> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| ServiceError::Validation(format!("bad model file name {}", path.display())))?
                .to_string();
            let text = fs::read_to_string(&path)?;
            let model = LoadedModel::from_json(&text)
                .map_err(|e| ServiceError::Validation(format!("{}: {e}", path.display())))?;
            self.insert(&id, model, path.display().to_string());
        }
        Ok(())
    }

    /// Adds or replaces a model. Table models default to their first
    /// context key for the self speaker and their second (or first) for
    /// the partner.
    pub fn insert(&mut self, id: &str, model: LoadedModel, source: String) {
        let contexts: Vec<String> = match &model {
            LoadedModel::Tabular(m) => m.context_keys().map(str::to_string).collect(),
            LoadedModel::NGram(_) => Vec::new(),
        };
        let vocab = model.vocabulary();
        let info = ModelInfo {
            id: id.to_string(),
            kind: model.kind(),
            source,
            vocab: vocab.surfaces().to_vec(),
            eos: vocab.eos_surface().to_string(),
            default_self_context: contexts.first().cloned(),
            default_partner_context: contexts.get(1).or(contexts.first()).cloned(),
            contexts,
        };
        self.models.insert(
            id.to_string(),
            RegisteredModel {
                model: Arc::new(model),
                info,
            },
        );
    }

    pub fn get(&self, id: &str) -> ServiceResult<&RegisteredModel> {
        self.models
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("model `{id}`")))
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        self.models.values().map(|m| m.info.clone()).collect()
    }
}
