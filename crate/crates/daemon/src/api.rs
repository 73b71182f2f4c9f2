//! Local HTTP API. Bodies are JSON.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `GET /status` | | health and counters |
//! | `GET /pending` | | open prompts |
//! | `GET /pending/{id}/photo` | | the prompted photo's bytes |
//! | `POST /decision` | `{prompt_id, choice}` | final decision, 409 if already resolved |
//! | `GET /audit?since=<ms>` | | entries at or after `since` |
//! | `GET /whitelist` | | `{apps}` |
//! | `POST /whitelist` | `{add, remove}` | updated `{apps}` |
//! | `POST /access` | `{app_id, path, system, app_state}` | the audit entry for the access |

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use photoguard_core::{PolicyDecision, UserChoice};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::guard::{AccessQuery, Guard};
use crate::prompts::AnswerError;

pub fn router(guard: Arc<Guard>) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/pending", get(pending))
        .route("/pending/{id}/photo", get(pending_photo))
        .route("/decision", post(decision))
        .route("/audit", get(audit))
        .route("/whitelist", get(whitelist).post(update_whitelist))
        .route("/access", post(access))
        .with_state(guard)
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

async fn status(State(g): State<Arc<Guard>>) -> Response {
    Json(g.status()).into_response()
}

async fn pending(State(g): State<Arc<Guard>>) -> Response {
    Json(g.pending()).into_response()
}

async fn pending_photo(State(g): State<Arc<Guard>>, Path(id): Path<u64>) -> Response {
    let Some(path) = g.pending_photo(id) else {
        return error(StatusCode::NOT_FOUND, format!("no open prompt {id}"));
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path)), (header::CACHE_CONTROL, "no-store")], bytes).into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, e),
    }
}

fn content_type(path: &std::path::Path) -> &'static str {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "jpg" | "jpeg" => "image/jpeg",
        "png" => "image/png",
        "gif" => "image/gif",
        "bmp" => "image/bmp",
        "webp" => "image/webp",
        "heic" => "image/heic",
        _ => "application/octet-stream",
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionBody {
    pub prompt_id: u64,
    pub choice: UserChoice,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionReply {
    pub prompt_id: u64,
    pub decision: PolicyDecision,
}

async fn decision(State(g): State<Arc<Guard>>, Json(body): Json<DecisionBody>) -> Response {
    if body.choice == UserChoice::Timeout {
        return error(StatusCode::BAD_REQUEST, "choice must be allow or deny");
    }
    match g.answer(body.prompt_id, body.choice) {
        Ok(decision) => Json(DecisionReply { prompt_id: body.prompt_id, decision }).into_response(),
        Err(e @ AnswerError::Unknown(_)) => error(StatusCode::NOT_FOUND, e),
        Err(e @ AnswerError::AlreadyResolved { decision, .. }) => (
            StatusCode::CONFLICT,
            Json(json!({ "error": e.to_string(), "prompt_id": body.prompt_id, "decision": decision })),
        )
            .into_response(),
    }
}

#[derive(Debug, Deserialize)]
struct AuditParams {
    since: Option<u64>,
}

async fn audit(State(g): State<Arc<Guard>>, Query(p): Query<AuditParams>) -> Response {
    Json(g.audit().since(p.since.unwrap_or(0))).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WhitelistReply {
    pub apps: Vec<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct WhitelistUpdate {
    #[serde(default)]
    pub add: Vec<String>,
    #[serde(default)]
    pub remove: Vec<String>,
}

async fn whitelist(State(g): State<Arc<Guard>>) -> Response {
    Json(WhitelistReply { apps: g.whitelist().iter().map(String::from).collect() }).into_response()
}

async fn update_whitelist(State(g): State<Arc<Guard>>, Json(body): Json<WhitelistUpdate>) -> Response {
    if body.add.iter().any(|a| a.trim().is_empty()) {
        return error(StatusCode::BAD_REQUEST, "app ids must be non-empty");
    }
    let wl = g.update_whitelist(&body.add, &body.remove);
    Json(WhitelistReply { apps: wl.iter().map(String::from).collect() }).into_response()
}

async fn access(State(g): State<Arc<Guard>>, Json(query): Json<AccessQuery>) -> Response {
    // own task: a client hanging up must not cancel the audit write
    let task = tokio::spawn(async move { g.handle_access(query).await });
    match task.await {
        Ok(Ok(entry)) => Json(entry).into_response(),
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}
