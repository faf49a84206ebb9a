//! HTTP/JSON service over interactive sessions.
//!
//! Each session is serialized behind its own lock; a request that finds its
//! session busy gets `409 Conflict` instead of waiting.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use octo_core::io::decode_tact;
use octo_core::llm::ChatMessage;
use octo_core::session::{LogEntry, Reply, Session, SessionEnv, SessionError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{Mutex, OwnedMutexGuard};
use tower_http::services::ServeDir;

pub const API_VERSION: &str = "v1";

pub struct AppState {
    env: SessionEnv,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    counter: AtomicU64,
}

impl AppState {
    pub fn new(env: SessionEnv) -> Arc<Self> {
        Arc::new(Self {
            env,
            sessions: RwLock::new(HashMap::new()),
            counter: AtomicU64::new(0),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = if e.is_user_error() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::BAD_GATEWAY
        };
        ApiError::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn session(state: &AppState, id: &str) -> ApiResult<OwnedMutexGuard<Session>> {
    let handle = state
        .sessions
        .read()
        .expect("session table lock")
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`")))?;
    handle.try_lock_owned().map_err(|_| {
        ApiError::new(
            StatusCode::CONFLICT,
            format!("session `{id}` is busy with another request"),
        )
    })
}

/// Runs blocking session work off the async executor.
async fn with_session<T: Send + 'static>(
    guard: OwnedMutexGuard<Session>,
    work: impl FnOnce(&mut Session) -> Result<T, SessionError> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(move || {
        let mut guard = guard;
        work(&mut guard)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(ApiError::from)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub rag: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Created>)> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid body: {e}")))?
    };
    let mut env = state.env.clone();
    if let Some(rag) = req.rag {
        env.rag = rag;
    }
    let id = format!("s{}", state.counter.fetch_add(1, Ordering::SeqCst) + 1);
    state
        .sessions
        .write()
        .expect("session table lock")
        .insert(id.clone(), Arc::new(Mutex::new(Session::new(id.clone(), env))));
    Ok((StatusCode::CREATED, Json(Created { session_id: id })))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TouchSummary {
    pub object_number: usize,
    pub name: String,
    pub salient_frames: Vec<usize>,
    pub adjectives: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub candidates: Vec<String>,
    pub touches: Vec<TouchSummary>,
    pub excluded: Vec<String>,
    pub transcript: Vec<ChatMessage>,
    pub log: Vec<LogEntry>,
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let s = session(&state, &id)?;
    Ok(Json(SessionView {
        session_id: s.id().to_owned(),
        candidates: s.candidates().to_vec(),
        touches: s
            .touches()
            .iter()
            .map(|t| TouchSummary {
                object_number: t.object_number,
                name: t.name.clone(),
                salient_frames: t.reading.salient_frames.clone(),
                adjectives: t.adjectives.clone(),
            })
            .collect(),
        excluded: s.excluded().to_vec(),
        transcript: s.transcript().resolved_messages(),
        log: s.log().to_vec(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct TouchQuery {
    pub name: Option<String>,
}

async fn touch(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<TouchQuery>,
    body: Bytes,
) -> ApiResult<Json<Reply>> {
    let guard = session(&state, &id)?;
    let payload = decode_tact(&body, "upload").map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let name = q.name.unwrap_or_else(|| "upload.tact".to_owned());
    Ok(Json(with_session(guard, move |s| s.touch(&name, payload)).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageBody {
    pub text: String,
}

async fn message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<MessageBody>,
) -> ApiResult<Json<Reply>> {
    if body.text.trim_start().to_lowercase().starts_with("touch") {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("upload samples to /sessions/{id}/touch"),
        ));
    }
    let guard = session(&state, &id)?;
    Ok(Json(with_session(guard, move |s| s.message(&body.text)).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachBody {
    pub label: String,
}

async fn teach(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<TeachBody>,
) -> ApiResult<Json<Reply>> {
    let label = body.label;
    if label.is_empty() || label != label.trim() || label.contains('\n') {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("invalid label `{label}`"),
        ));
    }
    let guard = session(&state, &id)?;
    Ok(Json(
        with_session(guard, move |s| s.message(&format!("teach {label}"))).await?,
    ))
}

async fn retrieval(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let guard = session(&state, &id)?;
    let result = with_session(guard, |s| s.retrieval()).await?;
    Ok(Json(json!({ "retrieval": result })))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION"), "api": API_VERSION }))
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/touch", post(touch))
        .route("/sessions/{id}/message", post(message))
        .route("/sessions/{id}/teach", post(teach))
        .route("/sessions/{id}/retrieval", get(retrieval))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
