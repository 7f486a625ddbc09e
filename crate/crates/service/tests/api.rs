use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use turnbeam::{api, load_session, Registry, SessionStore};

fn app(store: Arc<SessionStore>) -> axum::Router {
    api::router(store)
}

async fn call(store: &Arc<SessionStore>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app(store.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn memory_store() -> Arc<SessionStore> {
    Arc::new(SessionStore::in_memory(Arc::new(Registry::builtin())))
}

#[tokio::test]
async fn models_lists_fixtures() {
    let store = memory_store();
    let (status, body) = call(&store, "GET", "/models", None).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = body.as_array().unwrap().iter().map(|m| m["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["F1", "F2"]);
    assert_eq!(body[1]["default_partner_context"], "c2");
}

#[tokio::test]
async fn engine_opens_with_beam_top1_when_lookahead_is_zero() {
    let store = memory_store();
    let (status, body) = call(&store, "POST", "/sessions", Some(json!({"model": "F1", "K": 10, "L": 0, "T": 3}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["transcript"][0]["speaker"], "self");
    assert_eq!(body["transcript"][0]["text"], "a b </s>");
    assert_eq!(body["traces"].as_array().unwrap().len(), 1);
    assert_eq!(body["vocab"], json!(["a", "b", "</s>"]));
}

#[tokio::test]
async fn f2_session_opens_with_the_runner_up() {
    let store = memory_store();
    let (status, body) = call(
        &store,
        "POST",
        "/sessions",
        Some(json!({"model": "F2", "K": 2, "L": 1, "T": 2, "partner": "transparent"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["transcript"][0]["text"], "y </s>");
    let id = body["id"].as_str().unwrap();
    let (status, trace) = call(&store, "GET", &format!("/sessions/{id}/traces/0"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(trace["selected_rank_in_h0"], 1);
    assert!(trace["h0"]["entries"].as_array().unwrap().len() <= 2);
}

#[tokio::test]
async fn validation_and_not_found_errors() {
    let store = memory_store();
    let (status, body) = call(&store, "POST", "/sessions", Some(json!({"model": "F1", "L": -1}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "validation");
    let (status, _) = call(&store, "POST", "/sessions", Some(json!({"model": "F1", "K": 0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, body) = call(&store, "POST", "/sessions", Some(json!({"model": "nope"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
    let (status, _) = call(&store, "POST", "/sessions", Some(json!({"model": "F2", "self_context": "zz"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&store, "POST", "/sessions", Some(json!({"model": "F1", "partner": "mindless"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&store, "GET", "/sessions/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&store, "POST", "/sessions/missing/utterances", Some(json!({"text": "a"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn utterance_round_trip_and_errors() {
    let store = memory_store();
    let (_, body) = call(&store, "POST", "/sessions", Some(json!({"model": "F1", "K": 3, "L": 1, "T": 3}))).await;
    let id = body["id"].as_str().unwrap().to_string();

    let (status, err) = call(&store, "POST", &format!("/sessions/{id}/utterances"), Some(json!({"text": "a zz b qq"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "out_of_vocabulary");
    assert_eq!(err["tokens"], json!(["zz", "qq"]));

    let (status, reply) = call(&store, "POST", &format!("/sessions/{id}/utterances"), Some(json!({"text": "b a"}))).await;
    assert_eq!(status, StatusCode::OK, "{reply}");
    assert_eq!(reply["turn"], 1);
    assert_eq!(reply["utterance"]["speaker"], "self");

    let (status, trace) = call(&store, "GET", &format!("/sessions/{id}/traces/1"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(trace["hypothesis_sets"].as_array().unwrap().len(), 1);
    for bad in ["2", "x"] {
        let (status, _) = call(&store, "GET", &format!("/sessions/{id}/traces/{bad}"), None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
    }

    let (_, session) = call(&store, "GET", &format!("/sessions/{id}"), None).await;
    let lines: Vec<&str> = session["transcript"].as_array().unwrap().iter().map(|l| l["text"].as_str().unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "b a </s>");
}

#[test]
fn busy_session_answers_with_conflict() {
    let store = memory_store();
    let session = store.create(turnbeam::EngineConfig::new("F1")).unwrap();
    let (tx, rx) = std::sync::mpsc::channel();
    let (release_tx, release_rx) = std::sync::mpsc::channel::<()>();
    let holder = {
        let store = store.clone();
        let id = session.id.clone();
        std::thread::spawn(move || {
            store.with_session_locked(&id, || {
                tx.send(()).unwrap();
                release_rx.recv().unwrap();
            })
        })
    };
    rx.recv().unwrap();
    let err = store.post_utterance(&session.id, "a").unwrap_err();
    assert_eq!(err.status(), StatusCode::CONFLICT);
    release_tx.send(()).unwrap();
    holder.join().unwrap().unwrap();
    store.post_utterance(&session.id, "a").unwrap();
}

#[test]
fn persisted_sessions_reload_byte_equal() {
    let dir = tempfile::tempdir().unwrap();
    let registry = Arc::new(Registry::builtin());
    let store = SessionStore::open(registry.clone(), dir.path()).unwrap();
    let mut config = turnbeam::EngineConfig::new("F2");
    config.partner = turnbeam_core::PartnerKind::Transparent;
    config.beam_width = 3;
    config.lookahead = 2;
    config.max_tokens = 3;
    let created = store.create(config).unwrap();
    store.post_utterance(&created.id, "w").unwrap();
    store.post_utterance(&created.id, "a b").unwrap();
    let live = serde_json::to_vec(&store.get(&created.id).unwrap()).unwrap();

    let reopened = SessionStore::open(registry, dir.path()).unwrap();
    let loaded = serde_json::to_vec(&reopened.get(&created.id).unwrap()).unwrap();
    assert_eq!(live, loaded);
    let direct = load_session(&store.log_path(&created.id).unwrap()).unwrap();
    assert_eq!(direct, store.get(&created.id).unwrap());
    assert_eq!(direct.traces.len(), 3);
}
