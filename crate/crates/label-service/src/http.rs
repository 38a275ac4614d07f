use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prefrl_core::query::OracleVerdict;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::board::Resolve;
use crate::Shared;

fn error(code: StatusCode, message: impl Into<String>) -> Response {
    (code, Json(json!({ "error": message.into() }))).into_response()
}

/// Accepts `{"preference": 0}`, `{"preference": 1}` or `{"preference": "skip"}`.
pub fn parse_label(body: &[u8]) -> Result<OracleVerdict, String> {
    let value: Value = serde_json::from_slice(body).map_err(|e| format!("body is not JSON: {e}"))?;
    let object = value.as_object().ok_or("body must be a JSON object")?;
    if object.len() != 1 {
        return Err("body must contain exactly the key `preference`".into());
    }
    match object.get("preference") {
        Some(Value::Number(n)) if n.as_u64() == Some(0) => Ok(OracleVerdict::Prefer0),
        Some(Value::Number(n)) if n.as_u64() == Some(1) => Ok(OracleVerdict::Prefer1),
        Some(Value::String(s)) if s == "skip" => Ok(OracleVerdict::Skip),
        Some(other) => Err(format!("preference must be 0, 1 or \"skip\", got {other}")),
        None => Err("missing key `preference`".into()),
    }
}

async fn status(State(shared): State<Arc<Shared>>) -> Response {
    Json(shared.board().status()).into_response()
}

async fn pending(State(shared): State<Arc<Shared>>) -> Response {
    Json(shared.board().pending()).into_response()
}

async fn label(State(shared): State<Arc<Shared>>, Path(id): Path<String>, body: Bytes) -> Response {
    let verdict = match parse_label(&body) {
        Ok(v) => v,
        Err(msg) => return error(StatusCode::BAD_REQUEST, msg),
    };
    // Resolution and delivery happen under one lock so a verdict is sent exactly once.
    let mut board = shared.board();
    match board.resolve(&id, verdict) {
        Resolve::NotFound => error(StatusCode::NOT_FOUND, format!("no ticket `{id}`")),
        Resolve::AlreadyResolved(s) => error(StatusCode::CONFLICT, format!("ticket `{id}` is already {s:?}").to_lowercase()),
        Resolve::Resolved { slot, status } => {
            if shared.verdicts.send((slot, verdict)).is_err() {
                return error(StatusCode::SERVICE_UNAVAILABLE, "trainer is no longer listening");
            }
            drop(board);
            Json(json!({ "id": id, "status": status })).into_response()
        }
    }
}

pub fn router(shared: Arc<Shared>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/status", get(status))
        .route("/queries/pending", get(pending))
        .route("/queries/{id}/label", post(label))
        .with_state(shared);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
