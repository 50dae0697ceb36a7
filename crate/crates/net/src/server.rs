//! HTTP API over a [`LabelStore`].
//!
//! | route                          | reply                                        |
//! |--------------------------------|----------------------------------------------|
//! | `GET /api/queue?annotator&k`   | `{"candidates":[{"image_id","g","image_url"}]}` |
//! | `POST /api/labels`             | `{"revision":n}`; 400 bad category, 404 unknown image |
//! | `GET /api/stats`               | annotation statistics                        |
//! | `GET /api/image/{image_id}`    | image bytes with a sniffed media type        |
//! | `GET /api/health`              | `{"status":"ok"}`                            |
//!
//! Anything else is served from the UI directory when one is configured.
//! All mutations go through one write lock, so the store sees a single
//! writer and every read observes the latest acknowledged label.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ganeye_core::annotation::{AnnotationStats, Category, LabelStore, StatsConfig};
use ganeye_core::Error;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

/// Unreserved URL characters stay literal in image URLs.
const PATH_SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~');

const DEFAULT_BATCH: usize = 20;

/// Image files in one directory, addressable by file name or, when
/// unambiguous, by file stem.
#[derive(Debug, Default, Clone)]
pub struct ImageIndex {
    by_id: HashMap<String, PathBuf>,
}

impl ImageIndex {
    pub fn scan(dir: &Path) -> ganeye_core::Result<Self> {
        let io = |e| Error::Io {
            context: dir.display().to_string(),
            source: e,
        };
        let mut names = HashMap::new();
        let mut stems: HashMap<String, Vec<PathBuf>> = HashMap::new();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let entry = entry.map_err(io)?;
            if !entry.file_type().map_err(io)?.is_file() {
                continue;
            }
            let path = entry.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if name.starts_with('.') {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.entry(stem.to_string()).or_default().push(path.clone());
            }
            names.insert(name.to_string(), path);
        }
        let mut by_id = names;
        for (stem, paths) in stems {
            if by_id.contains_key(&stem) {
                continue;
            }
            if let [only] = paths.as_slice() {
                by_id.insert(stem, only.clone());
            } else {
                tracing::warn!(stem = %stem, count = paths.len(), "ambiguous image stem; use the full file name");
            }
        }
        Ok(Self { by_id })
    }

    pub fn get(&self, image_id: &str) -> Option<&Path> {
        self.by_id.get(image_id).map(PathBuf::as_path)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

pub struct AppState {
    pub store: RwLock<LabelStore>,
    pub images: ImageIndex,
    pub stats: StatsConfig,
}

impl AppState {
    pub fn new(store: LabelStore, images: ImageIndex, stats: StatsConfig) -> Arc<Self> {
        Arc::new(Self {
            store: RwLock::new(store),
            images,
            stats,
        })
    }
}

pub type SharedState = Arc<AppState>;

pub fn router(state: SharedState, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/queue", get(queue))
        .route("/api/labels", post(labels))
        .route("/api/stats", get(stats))
        .route("/api/image/{image_id}", get(image))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.into())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            e if e.is_environmental() => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.0.is_server_error() {
            tracing::error!(error = %self.1, "request failed");
        }
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct QueueParams {
    annotator: Option<String>,
    k: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct QueueItem {
    pub image_id: String,
    pub g: f64,
    pub image_url: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct QueueReply {
    pub candidates: Vec<QueueItem>,
}

pub fn image_url(image_id: &str) -> String {
    format!("/api/image/{}", utf8_percent_encode(image_id, PATH_SEGMENT))
}

async fn queue(
    State(state): State<SharedState>,
    Query(params): Query<QueueParams>,
) -> Result<Json<QueueReply>, ApiError> {
    let annotator = params
        .annotator
        .filter(|a| !a.trim().is_empty())
        .ok_or_else(|| ApiError::bad_request("annotator is required"))?;
    let k = params.k.unwrap_or(DEFAULT_BATCH);
    let batch = state.store.read().expect("store lock poisoned").next_candidates(&annotator, k);
    let candidates = batch
        .into_iter()
        .map(|c| QueueItem {
            image_url: image_url(&c.image_id),
            image_id: c.image_id,
            g: c.g,
        })
        .collect();
    Ok(Json(QueueReply { candidates }))
}

#[derive(Deserialize)]
struct LabelRequest {
    annotator: String,
    image_id: String,
    category: serde_json::Value,
}

/// The body is parsed by hand so every malformed submission is a 400.
async fn labels(State(state): State<SharedState>, body: Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    let req: LabelRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("malformed label: {e}")))?;
    if req.annotator.trim().is_empty() {
        return Err(ApiError::bad_request("annotator is required"));
    }
    let category = req
        .category
        .as_i64()
        .and_then(|c| Category::try_from(c).ok())
        .ok_or_else(|| ApiError::bad_request(format!("invalid category {}; expected 1, 2 or 3", req.category)))?;
    let revision = state.store.write().expect("store lock poisoned").submit(
        &req.annotator,
        &req.image_id,
        category,
        chrono::Utc::now(),
    )?;
    Ok(Json(json!({ "revision": revision })))
}

async fn stats(State(state): State<SharedState>) -> Json<AnnotationStats> {
    Json(state.store.read().expect("store lock poisoned").stats(&state.stats))
}

async fn image(State(state): State<SharedState>, UrlPath(image_id): UrlPath<String>) -> Result<Response, ApiError> {
    let not_found = || ApiError(StatusCode::NOT_FOUND, format!("no image for {image_id}"));
    if state.store.read().expect("store lock poisoned").candidate(&image_id).is_none() {
        return Err(not_found());
    }
    let path = state.images.get(&image_id).ok_or_else(not_found)?;
    let bytes = tokio::fs::read(path).await.map_err(|e| {
        ApiError::from(Error::Io {
            context: path.display().to_string(),
            source: e,
        })
    })?;
    let media_type = image::guess_format(&bytes)
        .map(|f| f.to_mime_type())
        .unwrap_or("application/octet-stream");
    Ok(([(header::CONTENT_TYPE, media_type)], bytes).into_response())
}
