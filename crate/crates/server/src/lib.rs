//! HTTP and WebSocket service for live deliberation sessions.
//!
//! Moderators drive sessions over REST; each participant holds one
//! WebSocket and only ever receives frames for their own subgroup.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create from a session config, returns id and participant tokens |
//! | POST | `/sessions/{id}/questions/{qid}/open` | open a question |
//! | POST | `/sessions/{id}/close` | close the open question now |
//! | POST | `/sessions/{id}/finish` | end the session |
//! | GET | `/sessions/{id}/report/{qid}` | forensic report |
//! | GET | `/sessions/{id}/events` | event log as JSON Lines |
//! | GET | `/sessions/{id}/ws?token=` | participant socket |

mod error;
mod live;
mod ws;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use csi_core::conviction::{Estimator, LexicalEstimator};
use csi_core::model::{EstimatorKind, RelayBackendKind, SessionConfig, Subgroup};
use csi_core::orchestrator::events::QuestionOpened;
use csi_core::orchestrator::report::ForensicReport;
use csi_core::orchestrator::{CloseOutcome, Session};
use csi_core::relay::{RelayBackend, StubBackend};

pub use error::ApiError;
pub use live::LiveSession;
pub use ws::ClientFrame;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Bearer token required on moderator routes; `None` leaves them open.
    pub moderator_token: Option<String>,
    pub tick: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { moderator_token: None, tick: Duration::from_millis(200) }
    }
}

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServerConfig>,
    sessions: Arc<RwLock<HashMap<String, Arc<LiveSession>>>>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        Self { config: Arc::new(config), sessions: Arc::default() }
    }

    pub fn session(&self, id: &str) -> Result<Arc<LiveSession>, ApiError> {
        self.sessions.read().expect("session map lock").get(id).cloned().ok_or_else(|| ApiError::SessionNotFound(id.into()))
    }

    fn authorize(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        let Some(expected) = &self.config.moderator_token else { return Ok(()) };
        let given = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer "));
        if given == Some(expected.as_str()) {
            Ok(())
        } else {
            Err(ApiError::Unauthorized)
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/questions/{qid}/open", post(open_question))
        .route("/sessions/{id}/close", post(close_question))
        .route("/sessions/{id}/finish", post(finish_session))
        .route("/sessions/{id}/report/{qid}", get(report))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/ws", get(ws::upgrade))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, config: ServerConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub subgroups: Vec<Subgroup>,
    /// Participant id → WebSocket token.
    pub participant_tokens: BTreeMap<String, String>,
}

fn random_token() -> String {
    format!("{:032x}", rand::random::<u128>())
}

type Components = (Arc<dyn Estimator>, Arc<dyn RelayBackend>);

fn components(config: &SessionConfig) -> Result<Components, ApiError> {
    use csi_core::llm::{LlmBackend, LlmClient, LlmConfig, LlmEstimator};
    let client = || -> Result<LlmClient, ApiError> {
        let cfg = LlmConfig::from_env().ok_or_else(|| ApiError::Backend(format!("{} is not set", csi_core::llm::ENV_URL)))?;
        LlmClient::new(cfg).map_err(|e| ApiError::Backend(e.to_string()))
    };
    let estimator: Arc<dyn Estimator> = match config.estimator {
        EstimatorKind::Lexical => Arc::new(LexicalEstimator),
        EstimatorKind::Llm => Arc::new(LlmEstimator(client()?)),
    };
    let backend: Arc<dyn RelayBackend> = match config.relay_backend {
        RelayBackendKind::Stub => Arc::new(StubBackend),
        RelayBackendKind::Llm => Arc::new(LlmBackend(client()?)),
    };
    Ok((estimator, backend))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("session task panicked")
}

async fn create_session(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(config): Json<SessionConfig>,
) -> Result<impl IntoResponse, ApiError> {
    state.authorize(&headers)?;
    let id = random_token();
    let (live, created) = blocking(move || -> Result<_, ApiError> {
        let (estimator, backend) = components(&config)?;
        let session = Session::create(id.clone(), config, estimator, backend)?;
        let participant_tokens: BTreeMap<String, String> = session.config().roster_ids().into_iter().map(|p| (p, random_token())).collect();
        let tokens: HashMap<String, String> = participant_tokens.iter().map(|(p, t)| (t.clone(), p.clone())).collect();
        let created = CreatedSession { session_id: id, subgroups: session.plan().subgroups.clone(), participant_tokens };
        Ok((Arc::new(LiveSession::new(session, tokens)), created))
    })
    .await?;
    state.sessions.write().expect("session map lock").insert(live.id.clone(), live.clone());
    live::spawn_ticker(Arc::downgrade(&live), state.config.tick);
    Ok((axum::http::StatusCode::CREATED, Json(created)))
}

async fn open_question(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path((id, qid)): Path<(String, String)>,
) -> Result<Json<QuestionOpened>, ApiError> {
    state.authorize(&headers)?;
    let live = state.session(&id)?;
    Ok(Json(blocking(move || live.mutate(|s, now| s.open_question(&qid, now))).await?))
}

async fn close_question(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Result<Json<CloseOutcome>, ApiError> {
    state.authorize(&headers)?;
    let live = state.session(&id)?;
    Ok(Json(blocking(move || live.mutate(|s, now| s.close_question(now))).await?))
}

async fn finish_session(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    state.authorize(&headers)?;
    let live = state.session(&id)?;
    blocking(move || live.mutate(|s, _| s.finish())).await?;
    Ok(axum::http::StatusCode::NO_CONTENT)
}

async fn report(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path((id, qid)): Path<(String, String)>,
) -> Result<Json<ForensicReport>, ApiError> {
    state.authorize(&headers)?;
    let live = state.session(&id)?;
    Ok(Json(live.read(|s| s.generate_report(&qid))?))
}

async fn events(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    state.authorize(&headers)?;
    let live = state.session(&id)?;
    let body = live.read(|s| s.export_event_log());
    Ok(([(header::CONTENT_TYPE, "application/jsonl")], body))
}
