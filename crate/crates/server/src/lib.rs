//! HTTP API over a [`Pipeline`].
//!
//! | route | |
//! |---|---|
//! | `POST /v1/claims` | submit documents (JSON base64 or multipart); `sync` defaults to true |
//! | `GET /v1/claims` | paged listing, `?limit&offset` |
//! | `GET /v1/claims/{id}` | full result; 202 while an async job runs |
//! | `POST /v1/claims/{id}/corrections` | `{page_index, field, new_value}` |
//! | `GET /v1/claims/{id}/pages/{n}/image` | stored resized page, PNG |
//! | `GET /v1/metrics` | metrics snapshot |
//! | `GET /v1/config` | active configuration, secrets redacted |
//!
//! Errors are `{"error": {"code", "message"}}`, plus `claim_id` when one was
//! allocated.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use claimpipe_core::pipeline::{Pipeline, PipelineConfig, PipelineError};
use claimpipe_core::preprocess::RawDocument;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

/// The published response schema for `ClaimExtractionResult`.
pub const RESULT_SCHEMA: &str = include_str!("../schemas/claim_result.schema.json");

pub const DEFAULT_LIST_LIMIT: usize = 20;
pub const MAX_LIST_LIMIT: usize = 200;
pub const DEFAULT_MAX_REQUEST_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceOptions {
    /// Documents processed at once; further requests queue.
    pub workers: usize,
    pub max_request_bytes: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self { workers: 4, max_request_bytes: DEFAULT_MAX_REQUEST_BYTES }
    }
}

pub struct AppState {
    pipeline: Arc<Pipeline>,
    workers: Arc<Semaphore>,
    pending: Mutex<BTreeSet<String>>,
    config: Option<Value>,
    max_request_bytes: usize,
}

impl AppState {
    pub fn new(pipeline: Arc<Pipeline>, opts: ServiceOptions) -> Self {
        Self {
            pipeline,
            workers: Arc::new(Semaphore::new(opts.workers.max(1))),
            pending: Mutex::default(),
            config: None,
            max_request_bytes: opts.max_request_bytes,
        }
    }

    /// Builds the pipeline from `cfg` and exposes its redacted form on `/v1/config`.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, claimpipe_core::pipeline::BuildError> {
        let pipeline = Pipeline::from_config(cfg)?;
        let opts = ServiceOptions { workers: cfg.service.workers, ..Default::default() };
        Ok(Self::new(Arc::new(pipeline), opts).with_config(cfg))
    }

    pub fn with_config(mut self, cfg: &PipelineConfig) -> Self {
        self.config = Some(serde_json::to_value(cfg.redacted()).expect("config serializes"));
        self
    }

    pub fn pipeline(&self) -> &Arc<Pipeline> {
        &self.pipeline
    }

    fn is_pending(&self, id: &str) -> bool {
        self.pending.lock().expect("pending set").contains(id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_id: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), claim_id: None } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn with_claim(mut self, id: impl Into<String>) -> Self {
        self.body.claim_id = Some(id.into());
        self
    }
}

/// HTTP status for a pipeline error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "not_found" => StatusCode::NOT_FOUND,
        "payload_too_large" => StatusCode::PAYLOAD_TOO_LARGE,
        "unsupported_format" => StatusCode::UNSUPPORTED_MEDIA_TYPE,
        "decode_failed" | "empty_document" => StatusCode::UNPROCESSABLE_ENTITY,
        "rasterizer_unavailable" => StatusCode::SERVICE_UNAVAILABLE,
        "bad_request" => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let err = Self::new(status_for(e.code()), e.code(), e.to_string());
        match &e {
            PipelineError::Preprocess { claim_id, .. } => err.with_claim(claim_id.clone()),
            PipelineError::NoDocuments => Self::bad_request(e.to_string()),
            _ => err,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.body }))).into_response()
    }
}

macro_rules! rejection {
    ($($t:ty),*) => {$(
        impl From<$t> for ApiError {
            fn from(r: $t) -> Self {
                Self::bad_request(r.body_text())
            }
        }
    )*};
}
rejection!(JsonRejection, QueryRejection, PathRejection);

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.max_request_bytes;
    Router::new()
        .route("/v1/claims", post(submit).get(list))
        .route("/v1/claims/{id}", get(fetch))
        .route("/v1/claims/{id}/corrections", post(correct))
        .route("/v1/claims/{id}/pages/{n}/image", get(page_image))
        .route("/v1/metrics", get(metrics))
        .route("/v1/config", get(config))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Runs `f` on the blocking pool once a worker slot is free.
async fn on_worker<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> T + Send + 'static,
    T: Send + 'static,
{
    let permit = state.workers.clone().acquire_owned().await.expect("semaphore never closed");
    tokio::task::spawn_blocking(move || {
        let _permit = permit;
        f()
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadDocument {
    pub filename: String,
    pub content_base64: String,
}

/// JSON form of `POST /v1/claims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub documents: Vec<UploadDocument>,
    #[serde(default)]
    pub sync: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accepted {
    pub claim_id: String,
    pub status: String,
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ApiError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ApiError::bad_request(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn raw_document(filename: String, bytes: Vec<u8>) -> Result<RawDocument, ApiError> {
    RawDocument::new(filename.clone(), bytes).map_err(|e| ApiError::new(status_for(e.code()), e.code(), format!("{filename}: {e}")))
}

async fn read_multipart(req: Request) -> Result<(Vec<RawDocument>, Option<bool>), ApiError> {
    let mut form = Multipart::from_request(req, &()).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let (mut docs, mut sync) = (Vec::new(), None);
    while let Some(part) = form.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
        let name = part.name().unwrap_or_default().to_string();
        match part.file_name().map(str::to_string) {
            Some(filename) => {
                let bytes = part.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
                docs.push(raw_document(filename, bytes.to_vec())?);
            }
            None if name == "sync" => {
                let text = part.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
                sync = Some(parse_bool("sync", &text)?);
            }
            None => {}
        }
    }
    Ok((docs, sync))
}

async fn read_json_upload(req: Request) -> Result<(Vec<RawDocument>, Option<bool>), ApiError> {
    let Json(body) = Json::<SubmitRequest>::from_request(req, &()).await?;
    let mut docs = Vec::with_capacity(body.documents.len());
    for d in body.documents {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(d.content_base64.trim())
            .map_err(|e| ApiError::bad_request(format!("{}: invalid base64: {e}", d.filename)))?;
        docs.push(raw_document(d.filename, bytes)?);
    }
    Ok((docs, body.sync))
}

async fn submit(
    State(state): State<Arc<AppState>>,
    query: Result<Query<HashMap<String, String>>, QueryRejection>,
    req: Request,
) -> Result<Response, ApiError> {
    let Query(query) = query?;
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let (docs, body_sync) = if multipart { read_multipart(req).await? } else { read_json_upload(req).await? };
    if docs.is_empty() {
        return Err(ApiError::bad_request("no documents supplied"));
    }
    let sync = match query.get("sync") {
        Some(v) => parse_bool("sync", v)?,
        None => body_sync.unwrap_or(true),
    };

    let pipeline = state.pipeline.clone();
    if sync {
        let result = on_worker(&state, move || pipeline.process_bundle(docs)).await??;
        return Ok(Json(result).into_response());
    }

    let claim_id = pipeline.allocate_claim_id()?;
    state.pending.lock().expect("pending set").insert(claim_id.clone());
    let (bg, id) = (state.clone(), claim_id.clone());
    tokio::spawn(async move {
        let run_id = id.clone();
        let outcome = on_worker(&bg, move || pipeline.process_bundle_as(run_id, docs)).await;
        match outcome {
            Ok(Ok(_)) => {}
            Ok(Err(e)) => tracing::warn!(claim_id = %id, error = %e, "async job failed"),
            Err(e) => tracing::error!(claim_id = %id, error = %e.body.message, "async job aborted"),
        }
        bg.pending.lock().expect("pending set").remove(&id);
    });
    Ok((StatusCode::ACCEPTED, Json(Accepted { claim_id, status: "processing".into() })).into_response())
}

async fn fetch(State(state): State<Arc<AppState>>, id: Result<Path<String>, PathRejection>) -> Result<Response, ApiError> {
    let Path(id) = id?;
    if state.is_pending(&id) {
        return Ok((StatusCode::ACCEPTED, Json(Accepted { claim_id: id, status: "processing".into() })).into_response());
    }
    let pipeline = state.pipeline.clone();
    let lookup = id.clone();
    let (loaded, failure) = on_worker(&state, move || {
        let loaded = pipeline.load(&lookup);
        let failure = match &loaded {
            Err(PipelineError::NotFound(_)) => pipeline.store().failure(&lookup).ok().flatten(),
            _ => None,
        };
        (loaded, failure)
    })
    .await?;
    match (loaded, failure) {
        (Ok(r), _) => Ok(Json(r).into_response()),
        (Err(_), Some(job)) => Err(ApiError::new(status_for(&job.error_code), &job.error_code, job.message).with_claim(id)),
        (Err(e), None) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ListQuery {
    limit: Option<usize>,
    offset: Option<usize>,
}

async fn list(State(state): State<Arc<AppState>>, q: Result<Query<ListQuery>, QueryRejection>) -> Result<Response, ApiError> {
    let Query(q) = q?;
    let limit = q.limit.unwrap_or(DEFAULT_LIST_LIMIT);
    if limit == 0 || limit > MAX_LIST_LIMIT {
        return Err(ApiError::bad_request(format!("limit must lie in 1..={MAX_LIST_LIMIT}")));
    }
    let offset = q.offset.unwrap_or(0);
    let pipeline = state.pipeline.clone();
    let listing = on_worker(&state, move || pipeline.store().list(limit, offset)).await?.map_err(PipelineError::from)?;
    Ok(Json(listing).into_response())
}

/// Body of `POST /v1/claims/{id}/corrections`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub page_index: usize,
    pub field: String,
    pub new_value: String,
}

async fn correct(
    State(state): State<Arc<AppState>>,
    id: Result<Path<String>, PathRejection>,
    body: Result<Json<CorrectionRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Path(id) = id?;
    let Json(body) = body?;
    let pipeline = state.pipeline.clone();
    let updated =
        on_worker(&state, move || pipeline.record_correction(&id, body.page_index, &body.field, &body.new_value)).await??;
    Ok(Json(updated).into_response())
}

async fn page_image(
    State(state): State<Arc<AppState>>,
    path: Result<Path<(String, usize)>, PathRejection>,
) -> Result<Response, ApiError> {
    let Path((id, n)) = path?;
    let pipeline = state.pipeline.clone();
    let png = on_worker(&state, move || pipeline.store().page_image(&id, n)).await?.map_err(PipelineError::from)?;
    let mut resp = Body::from(png).into_response();
    resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    Ok(resp)
}

async fn metrics(State(state): State<Arc<AppState>>) -> Json<claimpipe_core::pipeline::MetricsSnapshot> {
    Json(state.pipeline.metrics().snapshot())
}

async fn config(State(state): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    state
        .config
        .clone()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", "service was started without a config file"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_codes_follow_error_codes() {
        assert_eq!(status_for("decode_failed"), StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(status_for("unsupported_format"), StatusCode::UNSUPPORTED_MEDIA_TYPE);
        assert_eq!(status_for("payload_too_large"), StatusCode::PAYLOAD_TOO_LARGE);
        assert_eq!(status_for("not_found"), StatusCode::NOT_FOUND);
        assert_eq!(status_for("store_error"), StatusCode::INTERNAL_SERVER_ERROR);
    }

    #[test]
    fn booleans() {
        assert!(parse_bool("sync", "TRUE").unwrap());
        assert!(!parse_bool("sync", "0").unwrap());
        assert!(parse_bool("sync", "maybe").is_err());
    }

    #[test]
    fn schema_is_valid_json() {
        let v: Value = serde_json::from_str(RESULT_SCHEMA).unwrap();
        assert_eq!(v["title"], "ClaimExtractionResult");
    }
}
