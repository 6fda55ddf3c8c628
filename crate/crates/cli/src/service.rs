//! HTTP facade over adaptive inference.
//!
//! `POST /api/enhance`, `POST /api/score` and `GET /api/health`, all JSON.
//! Images travel as base64-encoded PNG/PPM files.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use lumen_core::data_io::{decode_image, encode_png, encode_png_thumbnail};
use lumen_core::engine::normalized_luminance_zfc;
use lumen_core::inference::{enhance_adaptive, InferenceConfig, PersonalizationTarget};
use lumen_core::metrics::luminance_histogram;
use lumen_core::rl::quality_score;
use lumen_core::{Error as CoreError, ImageTensor, PolicyValueNet};

pub const DEFAULT_MAX_PIXELS: usize = 4_000_000;
pub const HISTOGRAM_BINS: usize = 32;
pub const THUMBNAIL_EDGE: usize = 128;
const BODY_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Debug)]
pub struct LoadedModel {
    pub net: PolicyValueNet,
    pub round: usize,
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub model: Option<Arc<LoadedModel>>,
    pub max_pixels: usize,
    pub inference: InferenceConfig,
}

impl AppState {
    pub fn new(model: Option<LoadedModel>) -> Self {
        Self { model: model.map(Arc::new), max_pixels: DEFAULT_MAX_PIXELS, inference: InferenceConfig::default() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetBody {
    pub reference_image: Option<String>,
    pub zfc_target: Option<f64>,
    pub fixed_iterations: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhanceRequest {
    pub input_image: String,
    pub target: TargetBody,
    pub epsilon: Option<f64>,
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub return_steps: bool,
}

#[derive(Debug, Serialize)]
pub struct TrajectoryEntry {
    pub step: usize,
    pub zfc: f64,
}

#[derive(Debug, Serialize)]
pub struct EnhanceResponse {
    pub output_image: String,
    pub iterations_used: usize,
    pub converged: bool,
    pub output_step: usize,
    pub zfc_trajectory: Vec<TrajectoryEntry>,
    pub input_histogram: Vec<u64>,
    pub output_histogram: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_histogram: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_images: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub image: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ScoreResponse {
    pub quality_score: f64,
    pub normalized_zfc: f64,
    pub histogram: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct HealthResponse {
    pub status: String,
    pub model_loaded: bool,
    pub checkpoint_round: Option<usize>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

fn decode_b64_image(field: &str, data: &str, max_pixels: usize) -> Result<ImageTensor, ApiError> {
    let bytes = B64.decode(data).map_err(|e| ApiError::bad_request(format!("{field}: invalid base64: {e}")))?;
    let image = decode_image(&bytes).map_err(|e| ApiError::bad_request(format!("{field}: {e}")))?;
    if image.pixel_count() > max_pixels {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("{field}: {} pixels exceeds the limit of {max_pixels}", image.pixel_count()),
        ));
    }
    Ok(image)
}

fn histogram(image: &ImageTensor) -> Vec<u64> {
    luminance_histogram(image, HISTOGRAM_BINS).expect("bin count is valid")
}

fn png_b64(image: &ImageTensor) -> Result<String, ApiError> {
    encode_png(image).map(|b| B64.encode(b)).map_err(internal)
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

/// Everything after body parsing; runs on a blocking thread.
fn run_enhance(state: &AppState, model: &LoadedModel, req: EnhanceRequest) -> Result<EnhanceResponse, ApiError> {
    let t = &req.target;
    let chosen = [t.reference_image.is_some(), t.zfc_target.is_some(), t.fixed_iterations.is_some()];
    if chosen.iter().filter(|&&c| c).count() != 1 {
        return Err(ApiError::bad_request(
            "target must set exactly one of reference_image, zfc_target, fixed_iterations",
        ));
    }
    let input = decode_b64_image("input_image", &req.input_image, state.max_pixels)?;
    let mut reference_histogram = None;
    let target = if let Some(r) = &t.reference_image {
        let reference = decode_b64_image("reference_image", r, state.max_pixels)?;
        reference_histogram = Some(histogram(&reference));
        PersonalizationTarget::ReferenceImage(reference)
    } else if let Some(z) = t.zfc_target {
        PersonalizationTarget::ZfcTarget { value: z, raw: false }
    } else {
        PersonalizationTarget::FixedIterations(t.fixed_iterations.unwrap_or_default())
    };
    let config = InferenceConfig {
        epsilon: req.epsilon.unwrap_or(state.inference.epsilon),
        max_iterations: req.max_iterations.unwrap_or(state.inference.max_iterations),
        record_trajectory: req.return_steps,
        stochastic_seed: None,
    };
    let result = enhance_adaptive(&model.net, &input, &target, &config).map_err(|e| match e {
        CoreError::DegenerateReference(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        CoreError::Config(_) | CoreError::ValueOutOfRange(_) => ApiError::bad_request(e.to_string()),
        other => internal(other),
    })?;
    let step_images = match &result.step_images {
        Some(images) => Some(
            images
                .iter()
                .map(|im| encode_png_thumbnail(im, THUMBNAIL_EDGE).map(|b| B64.encode(b)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(internal)?,
        ),
        None => None,
    };
    Ok(EnhanceResponse {
        output_image: png_b64(&result.output)?,
        iterations_used: result.iterations_used,
        converged: result.converged,
        output_step: result.output_step,
        zfc_trajectory: result
            .zfc_trajectory
            .iter()
            .map(|p| TrajectoryEntry { step: p.step, zfc: p.normalized_zfc })
            .collect(),
        input_histogram: histogram(&input),
        output_histogram: histogram(&result.output),
        reference_histogram,
        step_images,
    })
}

async fn enhance(State(state): State<AppState>, body: Bytes) -> Result<Json<EnhanceResponse>, ApiError> {
    let Some(model) = state.model.clone() else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"));
    };
    let req: EnhanceRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))?;
    let response = tokio::task::spawn_blocking(move || run_enhance(&state, &model, req)).await.map_err(internal)??;
    Ok(Json(response))
}

async fn score(State(state): State<AppState>, body: Bytes) -> Result<Json<ScoreResponse>, ApiError> {
    let req: ScoreRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))?;
    let image = decode_b64_image("image", &req.image, state.max_pixels)?;
    Ok(Json(ScoreResponse {
        quality_score: quality_score(&image),
        normalized_zfc: normalized_luminance_zfc(&image),
        histogram: histogram(&image),
    }))
}

async fn health(State(state): State<AppState>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        model_loaded: state.model.is_some(),
        checkpoint_round: state.model.as_ref().map(|m| m.round),
    })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/enhance", post(enhance))
        .route("/api/score", post(score))
        .route("/api/health", get(health))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
