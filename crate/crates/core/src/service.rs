//! HTTP service behind the labeling UI.
//!
//! Routes:
//! - `GET /api/kernels?status=unlabeled|labeled&limit=N` lists kernels as `{"id","url","page","box"}`
//! - `GET /api/kernels/{id}/image` returns the kernel PNG
//! - `POST /api/labels` appends a label record, `201`
//! - `DELETE /api/labels/{id}` appends a tombstone, `204`
//! - `GET /api/progress` returns `{"labeled","total"}`
//!
//! Anything else is served from the UI directory, or a built-in placeholder page.

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::Mutex;

use crate::error::{Error, Result};
use crate::segmentation::{build_manifest, LabelRecord, LabelStore, Manifest};
use crate::types::{BoundingBox, Label};

const PLACEHOLDER_UI: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>glyphspot labeling</title></head>\n<body><h1>glyphspot labeling service</h1>\n<p>No UI bundle configured. Start the server with <code>--ui-dir</code> pointing at a built bundle, or use the JSON API under <code>/api</code>.</p></body></html>\n";

#[derive(Debug)]
struct Inner {
    kernels_dir: PathBuf,
    store: LabelStore,
    ui_dir: Option<PathBuf>,
    writer: Mutex<()>,
}

/// Shared handler state; cheap to clone.
#[derive(Debug, Clone)]
pub struct ServiceState(Arc<Inner>);

impl ServiceState {
    pub fn new(kernels_dir: impl Into<PathBuf>, labels_file: impl Into<PathBuf>, ui_dir: Option<PathBuf>) -> Self {
        ServiceState(Arc::new(Inner {
            kernels_dir: kernels_dir.into(),
            store: LabelStore::new(labels_file.into()),
            ui_dir,
            writer: Mutex::new(()),
        }))
    }

    fn manifest(&self) -> Result<Manifest> {
        build_manifest(&self.0.kernels_dir, Some(self.0.store.path()))
    }

    async fn append(&self, record: LabelRecord) -> Result<()> {
        let _guard = self.0.writer.lock().await;
        let store = self.0.store.clone();
        tokio::task::spawn_blocking(move || store.append(&record))
            .await
            .expect("label writer task panicked")
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        log::error!("{e}");
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// A kernel id is a bare file name inside the kernels directory.
fn kernel_path(state: &ServiceState, id: &str) -> ApiResult<PathBuf> {
    let valid = !id.is_empty()
        && id.ends_with(".png")
        && Path::new(id).components().count() == 1
        && matches!(Path::new(id).components().next(), Some(Component::Normal(_)));
    if !valid {
        return Err(ApiError(StatusCode::BAD_REQUEST, format!("invalid kernel id {id:?}")));
    }
    let path = state.0.kernels_dir.join(id);
    if !path.is_file() {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("no kernel {id:?}")));
    }
    Ok(path)
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug, Deserialize)]
struct KernelQuery {
    status: Option<String>,
    limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelCard {
    pub id: String,
    pub url: String,
    pub page: String,
    #[serde(rename = "box")]
    pub bbox: Option<BoundingBox>,
}

async fn list_kernels(
    State(state): State<ServiceState>,
    Query(q): Query<KernelQuery>,
) -> ApiResult<Json<Vec<KernelCard>>> {
    let want: Option<bool> = match q.status.as_deref() {
        None | Some("") | Some("all") => None,
        Some("labeled") => Some(true),
        Some("unlabeled") => Some(false),
        Some(other) => return Err(ApiError(StatusCode::BAD_REQUEST, format!("unknown status {other:?}"))),
    };
    let manifest = state.manifest()?;
    let cards = manifest
        .entries
        .into_iter()
        .filter(|e| want.is_none_or(|w| e.label.is_some() == w))
        .take(q.limit.unwrap_or(usize::MAX))
        .map(|e| KernelCard {
            url: format!("/api/kernels/{}/image", e.kernel_path),
            id: e.kernel_path,
            page: e.page_id,
            bbox: e.bbox,
        })
        .collect();
    Ok(Json(cards))
}

async fn kernel_image(State(state): State<ServiceState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let path = kernel_path(&state, &id)?;
    let bytes = tokio::fs::read(&path).await.map_err(|e| Error::io(&path, e))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

#[derive(Debug, Deserialize)]
struct LabelBody {
    kernel: String,
    label: Label,
    ts: Option<u64>,
}

async fn post_label(
    State(state): State<ServiceState>,
    body: std::result::Result<Json<LabelBody>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<(StatusCode, Json<LabelRecord>)> {
    let Json(body) = body.map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.body_text()))?;
    kernel_path(&state, &body.kernel)?;
    let record = LabelRecord {
        kernel: body.kernel,
        label: Some(body.label),
        ts: body.ts.unwrap_or_else(now),
    };
    state.append(record.clone()).await?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn delete_label(State(state): State<ServiceState>, UrlPath(id): UrlPath<String>) -> ApiResult<StatusCode> {
    kernel_path(&state, &id)?;
    state
        .append(LabelRecord {
            kernel: id,
            label: None,
            ts: now(),
        })
        .await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Progress {
    pub labeled: usize,
    pub total: usize,
}

async fn progress(State(state): State<ServiceState>) -> ApiResult<Json<Progress>> {
    let manifest = state.manifest()?;
    Ok(Json(Progress {
        labeled: manifest.labeled_count(),
        total: manifest.len(),
    }))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("png") => "image/png",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn static_asset(State(state): State<ServiceState>, uri: Uri) -> Response {
    let Some(dir) = &state.0.ui_dir else {
        return Html(PLACEHOLDER_UI).into_response();
    };
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    if Path::new(rel).components().any(|c| !matches!(c, Component::Normal(_))) {
        return StatusCode::BAD_REQUEST.into_response();
    }
    let mut path = dir.join(rel);
    if !path.is_file() {
        // client-side routes fall back to the app shell
        path = dir.join("index.html");
    }
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

pub fn router(state: ServiceState) -> Router {
    Router::new()
        .route("/api/kernels", get(list_kernels))
        .route("/api/kernels/{id}/image", get(kernel_image))
        .route("/api/labels", post(post_label))
        .route("/api/labels/{id}", delete(delete_label))
        .route("/api/progress", get(progress))
        .fallback(static_asset)
        .with_state(state)
}

pub async fn bind(port: u16) -> Result<TcpListener> {
    TcpListener::bind(("127.0.0.1", port)).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            Error::PortInUse(port)
        } else {
            Error::io(format!("127.0.0.1:{port}"), e)
        }
    })
}

/// Serves until the process is stopped.
pub async fn serve(listener: TcpListener, state: ServiceState) -> Result<()> {
    let addr = listener.local_addr().map_err(|e| Error::io("listener", e))?;
    log::info!("labeling service on http://{addr}");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}
