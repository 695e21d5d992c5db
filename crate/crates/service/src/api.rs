//! The HTTP API over a running lifecycle.

use std::path::PathBuf;
use std::sync::Arc;

use adaptids_core::ingest::{decode_tensor, FlowKey, FlowSource};
use adaptids_core::lifecycle::{Category, Lifecycle, ObservedFlow};
use adaptids_core::Error;
use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const TOKEN_HEADER: &str = "x-api-token";
/// Upper bound on sample flows returned per cluster.
pub const MAX_SAMPLES: usize = 20;

pub struct AppState {
    pub lifecycle: Arc<Lifecycle>,
    pub token: Option<String>,
    pub report_dir: Option<PathBuf>,
}

/// Machine-readable error class carried in every error body.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Training(_) => "training",
        Error::Conflict(_) => "conflict",
        Error::NotFound(_) => "not_found",
        Error::Io { .. } => "io",
        _ => "invalid",
    }
}

pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::Conflict(_) => StatusCode::CONFLICT,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Training(_) | Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        let body = json!({ "error": self.0.to_string(), "kind": error_kind(&self.0) });
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn rejected(e: impl std::fmt::Display) -> ApiError {
    ApiError(Error::Invalid(e.to_string()))
}

/// Runs a lifecycle call off the async workers.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Lifecycle) -> adaptids_core::Result<T> + Send + 'static,
{
    let lifecycle = state.lifecycle.clone();
    match tokio::task::spawn_blocking(move || f(&lifecycle)).await {
        Ok(r) => r.map(Json).map_err(ApiError),
        Err(e) => Err(ApiError(Error::Training(format!("worker failed: {e}")))),
    }
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let given = req.headers().get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(token.as_str()) {
            let body = json!({ "error": "missing or wrong API token", "kind": "unauthorized" });
            return (StatusCode::UNAUTHORIZED, Json(body)).into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/clusters", get(clusters))
        .route("/clusters/{id}", get(cluster))
        .route("/clusters/{id}/samples", get(samples))
        .route("/clusters/{id}/label", post(label))
        .route("/clustering", post(clustering))
        .route("/retrain", post(retrain))
        .route("/report/latest", get(report))
        .route("/flows", post(flows))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

async fn status(State(s): State<Arc<AppState>>) -> ApiResult<Value> {
    blocking(&s, |l| Ok(json!(l.status()))).await
}

async fn clusters(State(s): State<Arc<AppState>>) -> ApiResult<Value> {
    blocking(&s, |l| Ok(json!(l.clusters()))).await
}

async fn cluster(State(s): State<Arc<AppState>>, id: Result<Path<u64>, PathRejection>) -> ApiResult<Value> {
    let Path(id) = id.map_err(rejected)?;
    blocking(&s, move |l| Ok(json!(l.cluster(id)?))).await
}

#[derive(Debug, Deserialize)]
pub struct SamplesQuery {
    pub limit: Option<usize>,
}

async fn samples(
    State(s): State<Arc<AppState>>,
    id: Result<Path<u64>, PathRejection>,
    q: Result<Query<SamplesQuery>, QueryRejection>,
) -> ApiResult<Value> {
    let Path(id) = id.map_err(rejected)?;
    let Query(q) = q.map_err(rejected)?;
    let limit = q.limit.unwrap_or(MAX_SAMPLES).min(MAX_SAMPLES);
    blocking(&s, move |l| Ok(json!(l.cluster_samples(id, limit)?))).await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRequest {
    #[serde(flatten)]
    pub category: Category,
    #[serde(default)]
    pub analyst: Option<String>,
}

async fn label(
    State(s): State<Arc<AppState>>,
    id: Result<Path<u64>, PathRejection>,
    req: Result<Json<LabelRequest>, JsonRejection>,
) -> ApiResult<Value> {
    let Path(id) = id.map_err(rejected)?;
    let Json(req) = req.map_err(rejected)?;
    let analyst = req.analyst.unwrap_or_else(|| "anonymous".into());
    blocking(&s, move |l| Ok(json!(l.decide(id, req.category, &analyst)?))).await
}

async fn clustering(State(s): State<Arc<AppState>>) -> ApiResult<Value> {
    blocking(&s, |l| Ok(json!({ "created": l.cluster_now()? }))).await
}

async fn retrain(State(s): State<Arc<AppState>>) -> ApiResult<Value> {
    blocking(&s, |l| Ok(json!(l.retrain()?))).await
}

async fn report(State(s): State<Arc<AppState>>) -> ApiResult<Value> {
    let dir = s.report_dir.clone();
    blocking(&s, move |l| {
        let experiment = match &dir {
            Some(d) => {
                let p = d.join("report.json");
                match std::fs::read(&p) {
                    Ok(bytes) => Some(serde_json::from_slice::<Value>(&bytes).map_err(|e| Error::Malformed {
                        location: p.display().to_string(),
                        reason: e.to_string(),
                    })?),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
                    Err(e) => return Err(Error::io(p, e)),
                }
            }
            None => None,
        };
        let retrain = l.last_retrain();
        if experiment.is_none() && retrain.is_none() {
            return Err(Error::NotFound("no report yet".into()));
        }
        Ok(json!({ "retrain": retrain, "experiment": experiment }))
    })
    .await
}

/// One flow submitted for scoring; `tensor` uses the manifest's inline
/// encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowSubmission {
    pub id: String,
    pub tensor: String,
    #[serde(default)]
    pub key: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowBatch {
    pub flows: Vec<FlowSubmission>,
}

impl FlowSubmission {
    fn into_observed(self) -> adaptids_core::Result<ObservedFlow> {
        let key = match &self.key {
            Some(k) => k.parse::<FlowKey>()?,
            None => FlowKey::unspecified(),
        };
        let encoded = self.tensor.strip_prefix("b64:").unwrap_or(&self.tensor);
        Ok(ObservedFlow {
            id: self.id,
            key,
            tensor: decode_tensor(encoded)?,
            source: FlowSource::Pcap,
        })
    }
}

async fn flows(State(s): State<Arc<AppState>>, batch: Result<Json<FlowBatch>, JsonRejection>) -> ApiResult<Value> {
    let Json(batch) = batch.map_err(rejected)?;
    blocking(&s, move |l| {
        let observed: Vec<ObservedFlow> = batch
            .flows
            .into_iter()
            .map(FlowSubmission::into_observed)
            .collect::<adaptids_core::Result<_>>()?;
        let outcomes = observed.into_iter().map(|f| l.observe(f)).collect::<adaptids_core::Result<Vec<_>>>()?;
        Ok(json!({ "verdicts": outcomes }))
    })
    .await
}
