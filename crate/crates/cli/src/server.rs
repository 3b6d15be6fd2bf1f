//! Local HTTP/JSON service under `/v1`. Requests to one session are handled
//! one at a time; distinct sessions share nothing mutable.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use coda::kernel::NamedChoice;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::session::{ApiError, Session, SessionOptions};

pub const PORT_ENV: &str = "CODA_PORT";
pub const DEFAULT_PORT: u16 = 7878;

#[derive(Default)]
pub struct Sessions {
    next: AtomicU64,
    map: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

type Shared = Arc<Sessions>;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "error": self }))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    r.map(|Json(t)| t).map_err(|e| ApiError::new(400, "malformed_body", e.body_text()))
}

fn to_json<T: serde::Serialize>(t: T) -> ApiResult {
    Ok(Json(serde_json::to_value(t).expect("response serialises")))
}

impl Sessions {
    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.map
            .lock()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(404, "unknown_session", format!("no session `{id}`")))
    }

    /// Runs `f` with the session locked.
    fn with<R>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<R, ApiError>) -> Result<R, ApiError> {
        let s = self.get(id)?;
        let mut guard = s.lock().expect("session lock");
        f(&mut guard)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    model: String,
    #[serde(flatten)]
    options: SessionOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FireBody {
    event: String,
    #[serde(default)]
    bindings: BTreeMap<String, String>,
    #[serde(default)]
    transitions: Vec<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GoldenBody {
    #[serde(default)]
    observe: Vec<String>,
    max_time: Option<u64>,
}

async fn create(State(app): State<Shared>, b: Result<Json<CreateBody>, JsonRejection>) -> Result<(StatusCode, Json<Value>), ApiError> {
    let b = body(b)?;
    let session = Session::new(&b.model, &b.options)?;
    let id = format!("s{}", app.next.fetch_add(1, Ordering::Relaxed) + 1);
    let out = json!({ "id": id, "model": session.model_name(), "state": session.state() });
    app.map.lock().expect("session map").insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(out)))
}

async fn remove(State(app): State<Shared>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match app.map.lock().expect("session map").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::new(404, "unknown_session", format!("no session `{id}`"))),
    }
}

async fn state(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult {
    to_json(app.with(&id, |s| Ok(s.state()))?)
}

async fn enabled(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult {
    to_json(json!({ "events": app.with(&id, |s| Ok(s.enabled()))? }))
}

async fn fire(State(app): State<Shared>, Path(id): Path<String>, b: Result<Json<FireBody>, JsonRejection>) -> ApiResult {
    let session = app.get(&id)?;
    let b = body(b)?;
    let choice = NamedChoice {
        event: b.event,
        params: b.bindings,
        transitions: b.transitions,
    };
    let step = session.lock().expect("session lock").fire(&choice)?;
    to_json(step)
}

async fn tick(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult {
    to_json(app.with(&id, |s| s.tick())?)
}

async fn undo(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult {
    to_json(app.with(&id, |s| s.undo())?)
}

async fn reset(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult {
    to_json(app.with(&id, |s| Ok(s.reset()))?)
}

async fn trace(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let t = app.with(&id, |s| Ok(s.trace()))?;
    to_json(json!({ "header": t.header, "records": t.records }))
}

async fn golden(State(app): State<Shared>, Path(id): Path<String>, raw: axum::body::Bytes) -> ApiResult {
    let b: GoldenBody = if raw.iter().all(u8::is_ascii_whitespace) {
        GoldenBody::default()
    } else {
        serde_json::from_slice(&raw).map_err(|e| ApiError::new(400, "malformed_body", e.to_string()))?
    };
    to_json(app.with(&id, |s| s.golden(b.observe, b.max_time))?)
}

async fn fallback() -> ApiError {
    ApiError::new(404, "unknown_route", "no such endpoint")
}

pub fn router() -> Router {
    Router::new()
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/{id}", axum::routing::delete(remove))
        .route("/v1/sessions/{id}/state", get(state))
        .route("/v1/sessions/{id}/enabled", get(enabled))
        .route("/v1/sessions/{id}/fire", post(fire))
        .route("/v1/sessions/{id}/tick", post(tick))
        .route("/v1/sessions/{id}/undo", post(undo))
        .route("/v1/sessions/{id}/reset", post(reset))
        .route("/v1/sessions/{id}/trace", get(trace))
        .route("/v1/sessions/{id}/golden", post(golden))
        .fallback(fallback)
        .with_state(Arc::new(Sessions::default()))
}

/// Serves until interrupted.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
