//! Local HTTP service.
//!
//! Handlers are stateless; pixel work runs on the blocking pool behind a
//! semaphore that caps concurrent jobs. Malformed requests get 400,
//! pipeline failures 422 with the failing stage and channel, and bodies
//! over the cap 413.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::{Multipart, MultipartError, MultipartRejection};
use axum::extract::rejection::{BytesRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use dst_core::imgio::{decode_image, CropRect};
use dst_core::lut::{DEFAULT_LUT_SIZE, MAX_LUT_SIZE};
use dst_core::pipeline::{transfer_optics, transfer_style, TransferConfig, TransferRecipe};
use dst_core::spectral::EquivalentKernel;
use dst_core::{Channel, RgbImage};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::jobs;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Concurrent pixel jobs.
    pub workers: usize,
    pub max_body_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            workers: jobs::logical_cores(),
            max_body_bytes: 64 << 20,
        }
    }
}

#[derive(Clone)]
struct AppState {
    pool: Arc<Semaphore>,
}

pub fn router(cfg: &ServiceConfig) -> Router {
    let state = AppState {
        pool: Arc::new(Semaphore::new(cfg.workers.max(1))),
    };
    Router::new()
        .route("/api/health", get(health))
        .route("/api/transfer", post(transfer))
        .route("/api/optics", post(optics))
        .route("/api/lut", post(lut))
        .layer(DefaultBodyLimit::max(cfg.max_body_bytes))
        .with_state(state)
}

/// Binds `addr` and serves until interrupted.
pub async fn serve(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "listening on http://{} ({} workers, {} MiB body cap)",
        listener.local_addr()?,
        cfg.workers,
        cfg.max_body_bytes >> 20
    );
    axum::serve(listener, router(&cfg))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// JSON error body.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ErrorBody {
    pub error: String,
    pub stage: Option<String>,
    pub channel: Option<Channel>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: String) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error,
                stage: None,
                channel: None,
            },
        }
    }

    fn malformed(error: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, error.into())
    }

    fn processing(e: dst_core::Error) -> Self {
        let (stage, channel) = e.location();
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: ErrorBody {
                error: e.to_string(),
                stage: stage.map(str::to_owned),
                channel,
            },
        }
    }

    /// Keeps 413 from body-limit rejections; anything else is malformed.
    fn rejected(status: StatusCode, text: String) -> Self {
        let status = if status == StatusCode::PAYLOAD_TOO_LARGE { status } else { StatusCode::BAD_REQUEST };
        ApiError::new(status, text)
    }
}

impl From<MultipartError> for ApiError {
    fn from(e: MultipartError) -> Self {
        ApiError::rejected(e.status(), e.body_text())
    }
}

impl From<MultipartRejection> for ApiError {
    fn from(e: MultipartRejection) -> Self {
        ApiError::rejected(e.status(), e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

/// Runs `job` on the blocking pool once a worker slot is free.
async fn run_job<T, F>(state: &AppState, job: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    let _permit = state
        .pool
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "worker pool closed".into()))?;
    tokio::task::spawn_blocking(job)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("job failed: {e}")))?
}

/// Reads every part of a multipart body, rejecting unknown or repeated
/// names.
async fn read_parts(
    multipart: Result<Multipart, MultipartRejection>,
    allowed: &[&str],
) -> Result<HashMap<String, Bytes>, ApiError> {
    let mut multipart = multipart?;
    let mut parts = HashMap::new();
    while let Some(field) = multipart.next_field().await? {
        let name = field.name().unwrap_or_default().to_owned();
        if !allowed.contains(&name.as_str()) {
            return Err(ApiError::malformed(format!("unexpected field `{name}`")));
        }
        let data = field.bytes().await?;
        if parts.insert(name.clone(), data).is_some() {
            return Err(ApiError::malformed(format!("field `{name}` given twice")));
        }
    }
    Ok(parts)
}

fn image_part(parts: &HashMap<String, Bytes>, name: &str) -> Result<RgbImage, ApiError> {
    let bytes = parts
        .get(name)
        .ok_or_else(|| ApiError::malformed(format!("missing field `{name}`")))?;
    decode_image(bytes).map_err(|e| ApiError::malformed(format!("{name}: {e}")))
}

fn text_part<'a>(parts: &'a HashMap<String, Bytes>, name: &str) -> Result<Option<&'a str>, ApiError> {
    parts
        .get(name)
        .map(|b| std::str::from_utf8(b).map_err(|_| ApiError::malformed(format!("{name}: not UTF-8"))))
        .transpose()
}

/// Response of `/api/transfer`.
#[derive(Debug, Serialize, Deserialize)]
pub struct TransferResponse {
    pub width: usize,
    pub height: usize,
    /// Base64 of a 16-bit PNG.
    pub png: String,
    pub recipe: TransferRecipe,
}

async fn transfer(
    State(state): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Json<TransferResponse>, ApiError> {
    let parts = read_parts(multipart, &["src", "tgt", "config"]).await?;
    let cfg: TransferConfig = match text_part(&parts, "config")? {
        Some(text) => serde_json::from_str(text).map_err(|e| ApiError::malformed(format!("config: {e}")))?,
        None => TransferConfig::default(),
    };
    let response = run_job(&state, move || {
        let src = image_part(&parts, "src")?;
        let tgt = image_part(&parts, "tgt")?;
        let (out, recipe) = transfer_style(&src, &tgt, &cfg).map_err(ApiError::processing)?;
        let png = jobs::encode_result(&out).map_err(ApiError::processing)?;
        Ok(TransferResponse {
            width: out.width,
            height: out.height,
            png: STANDARD.encode(png),
            recipe,
        })
    })
    .await?;
    Ok(Json(response))
}

/// Response of `/api/optics`.
#[derive(Debug, Serialize, Deserialize)]
pub struct OpticsResponse {
    pub width: usize,
    pub height: usize,
    /// Base64 of a 16-bit PNG.
    pub png: String,
    pub kernel: EquivalentKernel,
}

async fn optics(
    State(state): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Json<OpticsResponse>, ApiError> {
    let parts = read_parts(multipart, &["src", "t", "tprime", "diff_crop"]).await?;
    let crop: Option<CropRect> = text_part(&parts, "diff_crop")?
        .map(|s| s.trim().parse().map_err(|e| ApiError::malformed(format!("diff_crop: {e}"))))
        .transpose()?;
    let response = run_job(&state, move || {
        let src = image_part(&parts, "src")?;
        let t = image_part(&parts, "t")?;
        let tprime = image_part(&parts, "tprime")?;
        let (out, kernel) = transfer_optics(&src, &t, &tprime, crop).map_err(ApiError::processing)?;
        let png = jobs::encode_result(&out).map_err(ApiError::processing)?;
        Ok(OpticsResponse {
            width: out.width,
            height: out.height,
            png: STANDARD.encode(png),
            kernel,
        })
    })
    .await?;
    Ok(Json(response))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LutParams {
    size: Option<usize>,
}

async fn lut(
    State(state): State<AppState>,
    params: Result<Query<LutParams>, QueryRejection>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let Query(params) = params.map_err(|e| ApiError::rejected(e.status(), e.body_text()))?;
    let body = body.map_err(|e| ApiError::rejected(e.status(), e.body_text()))?;
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::malformed("recipe: not UTF-8"))?;
    let recipe = TransferRecipe::from_json(text).map_err(|e| ApiError::malformed(format!("recipe: {e}")))?;
    let size = params.size.unwrap_or(DEFAULT_LUT_SIZE);
    if !(2..=MAX_LUT_SIZE).contains(&size) {
        return Err(ApiError::malformed(format!("size {size} outside 2..={MAX_LUT_SIZE}")));
    }
    let cube = run_job(&state, move || jobs::cube_text(&recipe, size).map_err(ApiError::processing)).await?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/plain; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"look.cube\""),
        ],
        cube,
    )
        .into_response())
}
