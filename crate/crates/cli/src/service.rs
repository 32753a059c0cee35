//! HTTP labeling service. The training thread and the HTTP handlers share
//! nothing but two channels: query batches and status flow in, labels flow
//! out.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Component, Path, PathBuf};
use std::sync::mpsc::{Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tsad_core::active::{LabelMessage, QueryMessage, ServiceEvent};

const INDEX_HTML: &str = include_str!("../static/index.html");

#[derive(Debug, Default)]
struct Board {
    pending: BTreeMap<u64, QueryMessage>,
    resolved: BTreeSet<u64>,
    episode: Option<usize>,
    lambda: Option<f64>,
    budget_spent: usize,
    finished: bool,
}

/// Shared handle behind every route.
#[derive(Clone)]
pub struct LabelService {
    board: Arc<Mutex<Board>>,
    labels: Arc<Mutex<Sender<LabelMessage>>>,
    static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LabelPost {
    pub query_id: u64,
    pub label: u8,
    #[serde(default)]
    pub annotator: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StatusBody {
    pub episode: Option<usize>,
    /// Decimal string with 13 significant digits.
    pub lambda: Option<String>,
    pub budget_spent: usize,
    pub pending_count: usize,
    pub resolved_count: usize,
    pub finished: bool,
}

fn error_body(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

impl LabelService {
    pub fn new(labels: Sender<LabelMessage>, static_dir: Option<PathBuf>) -> Self {
        LabelService {
            board: Arc::new(Mutex::new(Board::default())),
            labels: Arc::new(Mutex::new(labels)),
            static_dir,
        }
    }

    /// Applies one event from the training loop. A new batch replaces any
    /// unanswered one, since the loop has given up on it.
    pub fn apply(&self, event: ServiceEvent) {
        let mut board = self.board.lock().expect("board lock");
        match event {
            ServiceEvent::Queries(batch) => {
                board.pending = batch.into_iter().map(|q| (q.query_id, q)).collect();
            }
            ServiceEvent::Status(s) => {
                board.episode = Some(s.episode);
                board.lambda = Some(s.lambda);
                board.budget_spent = s.budget_spent;
            }
            ServiceEvent::Finished => {
                board.finished = true;
                board.pending.clear();
            }
        }
    }

    /// Forwards every event from `events` until the sender hangs up.
    pub fn pump(&self, events: Receiver<ServiceEvent>) -> std::thread::JoinHandle<()> {
        let service = self.clone();
        std::thread::spawn(move || {
            for event in events {
                service.apply(event);
            }
            service.apply(ServiceEvent::Finished);
        })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/", get(index))
            .route("/api/queries", get(queries))
            .route("/api/labels", post(labels))
            .route("/api/status", get(status))
            .route("/{*path}", get(asset))
            .with_state(self.clone())
    }
}

async fn queries(State(s): State<LabelService>) -> Json<Vec<QueryMessage>> {
    let board = s.board.lock().expect("board lock");
    Json(board.pending.values().cloned().collect())
}

async fn labels(State(s): State<LabelService>, body: Result<Json<LabelPost>, axum::extract::rejection::JsonRejection>) -> Response {
    let Ok(Json(post)) = body else {
        return error_body(StatusCode::BAD_REQUEST, "body must be {query_id, label}");
    };
    if post.label > 1 {
        return error_body(StatusCode::UNPROCESSABLE_ENTITY, "label must be 0 or 1");
    }
    let mut board = s.board.lock().expect("board lock");
    if board.pending.remove(&post.query_id).is_none() {
        return error_body(StatusCode::NOT_FOUND, format!("no pending query {}", post.query_id));
    }
    board.resolved.insert(post.query_id);
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_default();
    let msg = LabelMessage {
        query_id: post.query_id,
        label: post.label,
        annotator: post.annotator.unwrap_or_else(|| "anonymous".into()),
        timestamp,
    };
    if s.labels.lock().expect("sender lock").send(msg).is_err() {
        return error_body(StatusCode::GONE, "training loop has stopped");
    }
    Json(serde_json::json!({ "status": "accepted", "query_id": post.query_id })).into_response()
}

async fn status(State(s): State<LabelService>) -> Json<StatusBody> {
    let board = s.board.lock().expect("board lock");
    Json(StatusBody {
        episode: board.episode,
        lambda: board.lambda.map(|l| format!("{l:.12e}")),
        budget_spent: board.budget_spent,
        pending_count: board.pending.len(),
        resolved_count: board.resolved.len(),
        finished: board.finished,
    })
}

async fn index(State(s): State<LabelService>) -> Response {
    match s.static_dir.as_ref().map(|d| d.join("index.html")) {
        Some(p) if p.is_file() => serve_file(&p),
        _ => Html(INDEX_HTML).into_response(),
    }
}

async fn asset(State(s): State<LabelService>, UrlPath(path): UrlPath<String>) -> Response {
    let Some(dir) = &s.static_dir else {
        return error_body(StatusCode::NOT_FOUND, "no such asset");
    };
    let rel = Path::new(&path);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return error_body(StatusCode::NOT_FOUND, "no such asset");
    }
    let full = dir.join(rel);
    if !full.is_file() {
        return error_body(StatusCode::NOT_FOUND, "no such asset");
    }
    serve_file(&full)
}

fn serve_file(path: &Path) -> Response {
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    };
    match std::fs::read(path) {
        Ok(bytes) => ([(header::CONTENT_TYPE, mime)], bytes).into_response(),
        Err(_) => error_body(StatusCode::NOT_FOUND, "no such asset"),
    }
}
