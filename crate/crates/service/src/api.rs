//! HTTP interface over a [`SessionStore`].
//!
//! - `POST /sessions` with an [`EngineConfig`] body
//! - `GET /sessions/{id}`
//! - `POST /sessions/{id}/utterances` with `{"text": ".."}`
//! - `GET /sessions/{id}/traces/{turn}`
//! - `GET /models`

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use turnbeam_core::SearchTrace;

use crate::engine::EngineConfig;
use crate::error::{ServiceError, ServiceResult};
use crate::registry::ModelInfo;
use crate::store::{Reply, Session, SessionStore, TranscriptLine};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub session: Session,
    pub vocab: Vec<String>,
    pub eos: String,
    pub transcript: Vec<TranscriptLine>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PostUtterance {
    pub text: String,
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/utterances", post(post_utterance))
        .route("/sessions/{id}/traces/{turn}", get(get_trace))
        .route("/models", get(list_models))
        .with_state(store)
}

fn view(store: &SessionStore, session: Session) -> ServiceResult<SessionView> {
    let model = store.registry().get(&session.config.model)?;
    let vocab = turnbeam_core::SpeakerModel::vocabulary(&*model.model);
    Ok(SessionView {
        vocab: vocab.surfaces().to_vec(),
        eos: vocab.eos_surface().to_string(),
        transcript: session.transcript(vocab),
        session,
    })
}

/// Runs store work off the async executor; searches are CPU-bound.
async fn blocking<T, F>(store: Arc<SessionStore>, f: F) -> ServiceResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionStore) -> ServiceResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn create_session(
    State(store): State<Arc<SessionStore>>,
    Json(config): Json<EngineConfig>,
) -> ServiceResult<(StatusCode, Json<SessionView>)> {
    let v = blocking(store, move |s| {
        let session = s.create(config)?;
        view(s, session)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(v)))
}

async fn get_session(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ServiceResult<Json<SessionView>> {
    let v = blocking(store, move |s| view(s, s.get(&id)?)).await?;
    Ok(Json(v))
}

async fn post_utterance(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    Json(body): Json<PostUtterance>,
) -> ServiceResult<Json<Reply>> {
    let reply = blocking(store, move |s| s.post_utterance(&id, &body.text)).await?;
    Ok(Json(reply))
}

async fn get_trace(
    State(store): State<Arc<SessionStore>>,
    Path((id, turn)): Path<(String, String)>,
) -> ServiceResult<Json<SearchTrace>> {
    let turn: usize = turn
        .parse()
        .map_err(|_| ServiceError::NotFound(format!("trace `{turn}` of session `{id}`")))?;
    let trace = blocking(store, move |s| s.trace(&id, turn)).await?;
    Ok(Json(trace))
}

async fn list_models(State(store): State<Arc<SessionStore>>) -> Json<Vec<ModelInfo>> {
    Json(store.registry().list())
}
