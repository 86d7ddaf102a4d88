//! HTTP surface: sessions, message turns streamed as server-sent events,
//! document upload, opportunity lookup and health.
//!
//! | route | |
//! |---|---|
//! | `POST /v1/sessions` | 201 `{session_id, created_at}` |
//! | `GET /v1/sessions/{id}` | session state |
//! | `POST /v1/sessions/{id}/messages` | `{text}` → `text/event-stream` |
//! | `POST /v1/sessions/{id}/documents` | text body → `{keywords}` |
//! | `GET /v1/opportunities/{id}` | record plus `status` |
//! | `GET /v1/healthz` | `{status, doc_count, per_agency_counts, last_modified}` |

mod sessions;

use std::convert::Infallible;
use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use futures::Stream;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use grantforge_core::agent::{ingest_document, run_turn, QueryPlan, Role, SessionState, TranscriptEntry, TurnContext};
use grantforge_core::corpus::status_of;
use grantforge_core::gateway::Gateway;
use grantforge_core::web::WebSearch;
use grantforge_core::{AgentEvent, Clock, Opportunity, OpportunityStatus, ResultCard, UnifiedIndex};

pub use sessions::{SessionHandle, SessionStore};

pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(2 * 3600);
const ACCEPTED_DOCUMENT_TYPES: [&str; 2] = ["text/plain", "text/markdown"];

#[derive(Debug, Clone)]
pub struct ServiceSettings {
    pub session_ttl: Duration,
    pub result_limit: usize,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self { session_ttl: DEFAULT_SESSION_TTL, result_limit: grantforge_core::agent::DEFAULT_RESULT_LIMIT }
    }
}

pub struct AppState {
    pub index: Arc<UnifiedIndex>,
    pub gateway: Gateway,
    pub web: Arc<dyn WebSearch>,
    pub clock: Arc<dyn Clock>,
    pub sessions: SessionStore,
    pub settings: ServiceSettings,
}

impl AppState {
    pub fn new(
        index: Arc<UnifiedIndex>,
        gateway: Gateway,
        web: Arc<dyn WebSearch>,
        clock: Arc<dyn Clock>,
        settings: ServiceSettings,
    ) -> Arc<Self> {
        let sessions = SessionStore::new(settings.session_ttl);
        Arc::new(Self { index, gateway, web, clock, sessions, settings })
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

fn unknown_session(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown session {id}"))
}

fn busy() -> Response {
    error(StatusCode::CONFLICT, "a turn is already active for this session")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/messages", post(post_message))
        .route("/v1/sessions/{id}/documents", post(upload_document))
        .route("/v1/opportunities/{id}", get(get_opportunity))
        .route("/v1/healthz", get(healthz))
        .with_state(state)
}

/// Serves until `shutdown` resolves. Idle sessions are evicted once a minute.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let evictor = {
        let state = state.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                let n = state.sessions.evict_idle();
                if n > 0 {
                    tracing::info!(evicted = n, "idle sessions evicted");
                }
            }
        })
    };
    let result = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    evictor.abort();
    result
}

async fn create_session(State(app): State<Arc<AppState>>) -> Response {
    let handle = app.sessions.create(app.clock.now());
    (StatusCode::CREATED, Json(handle)).into_response()
}

#[derive(Debug, Serialize)]
struct SessionView {
    session_id: String,
    created_at: DateTime<Utc>,
    turn_count: u64,
    plan: QueryPlan,
    last_hits: Vec<ResultCard>,
    transcript: Vec<TranscriptEntry>,
    uploaded_keywords: Option<Vec<String>>,
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(entry) = app.sessions.get(&id) else {
        return unknown_session(&id);
    };
    let state = entry.state.lock().await;
    Json(SessionView {
        session_id: state.session_id.clone(),
        created_at: entry.handle.created_at,
        turn_count: state.turn_count,
        plan: state.plan.clone(),
        last_hits: state.last_hits.clone(),
        transcript: state.transcript.clone(),
        uploaded_keywords: state.uploaded_keywords.clone(),
    })
    .into_response()
}

#[derive(Debug, Deserialize)]
struct MessageBody {
    text: String,
}

fn sse_frame(event: &AgentEvent) -> Event {
    Event::default()
        .event(event.kind().as_str())
        .data(serde_json::to_string(event).expect("events serialize"))
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<MessageBody>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let Some(entry) = app.sessions.get(&id) else {
        return unknown_session(&id);
    };
    let text = match body {
        Ok(Json(b)) if !b.text.trim().is_empty() => b.text,
        Ok(_) => return error(StatusCode::BAD_REQUEST, "message text is empty"),
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let Ok(mut guard) = entry.state.clone().try_lock_owned() else {
        return busy();
    };

    let (tx, rx) = mpsc::unbounded_channel::<AgentEvent>();
    let worker = app.clone();
    tokio::task::spawn_blocking(move || {
        let ctx = TurnContext {
            index: &worker.index,
            web: worker.web.as_ref(),
            gateway: &worker.gateway,
            clock: worker.clock.as_ref(),
            limit: worker.settings.result_limit,
        };
        let state: &mut SessionState = &mut guard;
        // a closed receiver means the client left; the turn still finishes
        let outcome = run_turn(state, &text, &ctx, &mut |event| {
            let _ = tx.send(event);
        });
        if let Err(e) = outcome {
            tracing::warn!(session = %state.session_id, error = %e, "turn rejected");
        }
        worker.sessions.touch(&state.session_id);
    });
    Sse::new(event_stream(rx)).into_response()
}

fn event_stream(rx: mpsc::UnboundedReceiver<AgentEvent>) -> impl Stream<Item = Result<Event, Infallible>> {
    futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|e| (Ok(sse_frame(&e)), rx)) })
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    filename: Option<String>,
}

#[derive(Debug, Serialize)]
struct UploadReply {
    keywords: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    filename: Option<String>,
}

fn declared_type(headers: &HeaderMap) -> Option<String> {
    let raw = headers.get(header::CONTENT_TYPE)?.to_str().ok()?;
    Some(raw.split(';').next().unwrap_or_default().trim().to_ascii_lowercase())
}

async fn upload_document(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<UploadQuery>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Response {
    let Some(entry) = app.sessions.get(&id) else {
        return unknown_session(&id);
    };
    match declared_type(&headers) {
        Some(t) if ACCEPTED_DOCUMENT_TYPES.contains(&t.as_str()) => {}
        Some(t) => return error(StatusCode::UNSUPPORTED_MEDIA_TYPE, format!("unsupported content type {t}; send extracted text")),
        None => return error(StatusCode::UNSUPPORTED_MEDIA_TYPE, "content type not declared; send text/plain or text/markdown"),
    }
    let Ok(text) = String::from_utf8(body.to_vec()) else {
        return error(StatusCode::BAD_REQUEST, "document body is not valid UTF-8");
    };
    if text.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "document is empty");
    }
    let filename = headers
        .get("x-filename")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or(query.filename);
    let Ok(mut guard) = entry.state.clone().try_lock_owned() else {
        return busy();
    };
    let worker = app.clone();
    let name = filename.clone();
    let result = tokio::task::spawn_blocking(move || {
        let state: &mut SessionState = &mut guard;
        let result = ingest_document(state, &text, &worker.gateway);
        if result.is_ok() {
            let label = name.map_or_else(|| "document".to_string(), |n| format!("document {n}"));
            state.transcript.push(TranscriptEntry { role: Role::User, text: format!("[uploaded {label}]") });
        }
        worker.sessions.touch(&state.session_id);
        result
    })
    .await;
    match result {
        Ok(Ok(keywords)) => Json(UploadReply { keywords, filename }).into_response(),
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Debug, Serialize)]
struct OpportunityView {
    #[serde(flatten)]
    opportunity: Opportunity,
    status: OpportunityStatus,
}

async fn get_opportunity(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match app.index.get(&id) {
        Some(opp) => {
            let status = status_of(&opp, app.clock.today());
            Json(OpportunityView { opportunity: opp, status }).into_response()
        }
        None => error(StatusCode::NOT_FOUND, format!("unknown opportunity {id}")),
    }
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
    #[serde(flatten)]
    stats: grantforge_core::IndexStats,
}

async fn healthz(State(app): State<Arc<AppState>>) -> Json<Health> {
    Json(Health { status: "ok", stats: app.index.stats() })
}
