//! JSON-over-HTTP endpoints.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/health` | |
//! | GET | `/models` | |
//! | POST | `/models/{model_id}/sample` | `{count, seed}` |
//! | POST | `/models/{model_id}/encode` | `{grid}` |
//! | POST | `/models/{model_id}/decode` | `{latent}` |
//! | POST | `/models/{model_id}/interpolate` | `{grids: [a, b]}` or `{latents: [a, b]}`, plus `steps` |
//! | POST | `/models/{model_id}/evolve` | `EvolutionSpec` |
//! | POST | `/metrics` | `{grid}` |
//! | GET, POST | `/sessions` | `{name}` on POST |
//! | GET, PUT | `/sessions/{id}` | `SessionUpdate` on PUT |
//!
//! Errors are `{"code": ..., "message": ...}` with status 404 (unknown model
//! or session), 409 (version conflict), 422 (invalid request, `NO_ENCODER`)
//! or 429 (evolution budget above the server cap).

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use levelblend::corpus::TileGrid;
use levelblend::evolve::{evolve_segment, EvolutionSpec, EvolveError, Termination};
use levelblend::latent::{self, LatentError, LatentVector};
use levelblend::metrics::SegmentMetrics;
use levelblend::models::Model;
use serde::{Deserialize, Serialize};

use crate::registry::{ModelRegistryEntry, Registry, RegistryError};
use crate::sessions::{DesignSession, SessionError, SessionStore, SessionSummary, SessionUpdate};

pub const DEFAULT_BUDGET_CAP: usize = 10_000;
pub const MAX_SAMPLE_COUNT: usize = 1_000;
pub const MAX_INTERPOLATION_STEPS: usize = 256;

#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    pub sessions: Arc<SessionStore>,
    pub budget_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "INVALID_REQUEST", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { code: self.code.into(), message: self.message })).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::invalid(r.body_text())
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::UnknownModel(_) => ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_MODEL", e.to_string()),
            RegistryError::InvalidId(_) => ApiError::invalid(e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_SESSION", e.to_string()),
            SessionError::Conflict { .. } => ApiError::new(StatusCode::CONFLICT, "VERSION_CONFLICT", e.to_string()),
            SessionError::Storage(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()),
        }
    }
}

impl From<LatentError> for ApiError {
    fn from(e: LatentError) -> Self {
        match e {
            LatentError::NoEncoder => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "NO_ENCODER", e.to_string()),
            _ => ApiError::invalid(e.to_string()),
        }
    }
}

impl From<EvolveError> for ApiError {
    fn from(e: EvolveError) -> Self {
        match e {
            EvolveError::Latent(l) => l.into(),
            EvolveError::InvalidSpec(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "INVALID_SPEC", e.to_string()),
            EvolveError::Cma(_) => ApiError::invalid(e.to_string()),
        }
    }
}

/// JSON body whose rejections become 422 `INVALID_REQUEST` errors.
#[derive(FromRequest)]
#[from_request(via(Json), rejection(ApiError))]
pub struct Body<T>(pub T);

type ApiResult<T> = Result<Json<T>, ApiError>;

/// A decoded segment with the latent that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub latent: LatentVector<f64>,
    pub grid: TileGrid,
    pub metrics: SegmentMetrics,
}

impl Segment {
    fn new(latent: &LatentVector<f32>, grid: TileGrid) -> Self {
        let latent = LatentVector::from_f64(&latent.to_f64()).expect("finite latent");
        Segment { latent, metrics: SegmentMetrics::of(&grid), grid }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub model_id: String,
    pub seed: u64,
    pub segments: Vec<Segment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRequest {
    pub grid: TileGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub model_id: String,
    pub latent: LatentVector<f64>,
    /// decode(encode(grid)).
    pub reconstruction: TileGrid,
    pub metrics: SegmentMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeRequest {
    pub latent: LatentVector<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeResponse {
    pub model_id: String,
    pub latent: LatentVector<f64>,
    pub grid: TileGrid,
    pub metrics: SegmentMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolateRequest {
    #[serde(default)]
    pub grids: Option<[TileGrid; 2]>,
    #[serde(default)]
    pub latents: Option<[LatentVector<f64>; 2]>,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolateResponse {
    pub model_id: String,
    pub steps: usize,
    pub path: Vec<Segment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveResponse {
    pub model_id: String,
    pub spec: EvolutionSpec,
    pub grid: TileGrid,
    pub metrics: SegmentMetrics,
    pub achieved: Option<f64>,
    pub fitness: f64,
    pub latent: LatentVector<f64>,
    pub evaluations: usize,
    pub termination: Termination,
    pub flat_fitness: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub metrics: SegmentMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelList {
    pub models: Vec<ModelRegistryEntry>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({"status": "ok"})) }))
        .route("/models", get(list_models))
        .route("/models/{model_id}/sample", post(sample))
        .route("/models/{model_id}/encode", post(encode))
        .route("/models/{model_id}/decode", post(decode))
        .route("/models/{model_id}/interpolate", post(interpolate))
        .route("/models/{model_id}/evolve", post(evolve))
        .route("/metrics", post(metrics))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session).put(update_session))
        .with_state(state)
}

/// Run model work off the async executor.
async fn with_model<R, F>(state: &AppState, model_id: &str, f: F) -> Result<R, ApiError>
where
    R: Send + 'static,
    F: FnOnce(&Model<f32>) -> Result<R, ApiError> + Send + 'static,
{
    let model = state.registry.model(model_id)?;
    tokio::task::spawn_blocking(move || f(&model))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?
}

fn to_f32(z: &LatentVector<f64>) -> Result<LatentVector<f32>, ApiError> {
    Ok(LatentVector::from_f64(z.values())?)
}

async fn list_models(State(state): State<AppState>) -> Json<ModelList> {
    Json(ModelList { models: state.registry.entries() })
}

async fn sample(State(state): State<AppState>, Path(model_id): Path<String>, Body(req): Body<SampleRequest>) -> ApiResult<SampleResponse> {
    if req.count == 0 || req.count > MAX_SAMPLE_COUNT {
        return Err(ApiError::invalid(format!("count must be in 1..={MAX_SAMPLE_COUNT}")));
    }
    let segments = with_model(&state, &model_id, move |m| {
        let zs = latent::sample_latents_dim::<f32>(req.count, req.seed, m.latent_dim())?;
        let grids = latent::decode_all(m, &zs)?;
        Ok(zs.iter().zip(grids).map(|(z, g)| Segment::new(z, g)).collect())
    })
    .await?;
    Ok(Json(SampleResponse { model_id, seed: req.seed, segments }))
}

async fn encode(State(state): State<AppState>, Path(model_id): Path<String>, Body(req): Body<GridRequest>) -> ApiResult<EncodeResponse> {
    let (z, back) = with_model(&state, &model_id, move |m| {
        let z = latent::encode(m, &req.grid)?;
        let back = latent::decode(m, &z)?;
        Ok((z, back))
    })
    .await?;
    let seg = Segment::new(&z, back);
    Ok(Json(EncodeResponse { model_id, latent: seg.latent, reconstruction: seg.grid, metrics: seg.metrics }))
}

async fn decode(State(state): State<AppState>, Path(model_id): Path<String>, Body(req): Body<DecodeRequest>) -> ApiResult<DecodeResponse> {
    let z = to_f32(&req.latent)?;
    let grid = with_model(&state, &model_id, move |m| Ok(latent::decode(m, &z)?)).await?;
    Ok(Json(DecodeResponse { model_id, latent: req.latent, metrics: SegmentMetrics::of(&grid), grid }))
}

async fn interpolate(
    State(state): State<AppState>,
    Path(model_id): Path<String>,
    Body(req): Body<InterpolateRequest>,
) -> ApiResult<InterpolateResponse> {
    if req.steps < 2 || req.steps > MAX_INTERPOLATION_STEPS {
        return Err(ApiError::invalid(format!("steps must be in 2..={MAX_INTERPOLATION_STEPS}")));
    }
    let endpoints = match (req.grids, &req.latents) {
        (Some(g), None) => Err(g),
        (None, Some([a, b])) => Ok([to_f32(a)?, to_f32(b)?]),
        _ => return Err(ApiError::invalid("give exactly one of `grids` or `latents`")),
    };
    let steps = req.steps;
    let path = with_model(&state, &model_id, move |m| {
        let [a, b] = match endpoints {
            Ok(zs) => zs,
            Err(grids) => {
                let mut codes = latent::encode_batch(m, &grids)?;
                let b = codes.pop().expect("two codes");
                [codes.pop().expect("two codes"), b]
            }
        };
        let zs = latent::lerp_path(&a, &b, steps)?;
        let grids = latent::interpolate_latent(m, &a, &b, steps)?;
        Ok(zs.iter().zip(grids).map(|(z, g)| Segment::new(z, g)).collect())
    })
    .await?;
    Ok(Json(InterpolateResponse { model_id, steps, path }))
}

async fn evolve(State(state): State<AppState>, Path(model_id): Path<String>, Body(spec): Body<EvolutionSpec>) -> ApiResult<EvolveResponse> {
    if spec.budget > state.budget_cap {
        return Err(ApiError::new(
            StatusCode::TOO_MANY_REQUESTS,
            "BUDGET_EXCEEDED",
            format!("budget {} exceeds the server cap of {} evaluations", spec.budget, state.budget_cap),
        ));
    }
    spec.validate()?;
    let res = with_model(&state, &model_id, move |m| Ok(evolve_segment(m, &spec)?)).await?;
    Ok(Json(EvolveResponse {
        model_id,
        latent: LatentVector::from_f64(&res.latent.to_f64())?,
        spec: res.spec,
        grid: res.grid,
        metrics: res.metrics,
        achieved: res.achieved,
        fitness: res.fitness,
        evaluations: res.evaluations,
        termination: res.termination,
        flat_fitness: res.flat_fitness,
    }))
}

async fn metrics(Body(req): Body<GridRequest>) -> Json<MetricsResponse> {
    Json(MetricsResponse { metrics: SegmentMetrics::of(&req.grid) })
}

async fn blocking<R: Send + 'static>(f: impl FnOnce() -> Result<R, SessionError> + Send + 'static) -> Result<R, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?
        .map_err(ApiError::from)
}

async fn list_sessions(State(state): State<AppState>) -> ApiResult<Vec<SessionSummary>> {
    Ok(Json(blocking(move || state.sessions.list()).await?))
}

async fn create_session(State(state): State<AppState>, Body(req): Body<CreateSession>) -> Result<(StatusCode, Json<DesignSession>), ApiError> {
    let s = blocking(move || state.sessions.create(&req.name)).await?;
    Ok((StatusCode::CREATED, Json(s)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<DesignSession> {
    Ok(Json(blocking(move || state.sessions.get(&id)).await?))
}

async fn update_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Body(update): Body<SessionUpdate>,
) -> ApiResult<DesignSession> {
    Ok(Json(blocking(move || state.sessions.update(&id, update)).await?))
}
