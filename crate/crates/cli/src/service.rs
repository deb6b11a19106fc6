//! HTTP reward service.
//!
//! `POST /v1/reward` scores a group of candidates and returns breakdowns
//! with group-relative advantages. `POST /v1/eval` starts a batch job polled
//! through `GET /v1/jobs/{id}`. `GET /v1/health` reports the verifier
//! version, cache counters and uptime.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use specgate::grpo;
use specgate::metrics::MetricsReport;
use specgate::reward::{score_group, RewardBreakdown, RewardWeights};
use specgate::source::SourceFile;
use specgate::verifier::{CacheStats, Gateway, Verdict};

use crate::eval::{evaluate, EvalItem, EvalOptions};

pub const SCHEMA_VERSION: u32 = 1;

/// Verified once per health check; cached after the first call.
const PROBE_PROGRAM: &str = "method SpecgateHealthProbe()\n{\n}\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRequest {
    pub code: String,
    pub ground_truth: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardResponse {
    pub schema_version: u32,
    pub rewards: Vec<RewardBreakdown>,
    pub advantages: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EvalRequest {
    pub records: Vec<EvalItem>,
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
}

fn default_k() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub schema_version: u32,
    pub job_id: String,
    pub status: JobStatus,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

pub struct AppState {
    gateway: Arc<Gateway>,
    weights: RewardWeights,
    auth_token: Option<String>,
    started: Instant,
    jobs: Mutex<HashMap<String, Job>>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(gateway: Arc<Gateway>, weights: RewardWeights, auth_token: Option<String>) -> Arc<Self> {
        Arc::new(AppState {
            gateway,
            weights,
            auth_token,
            started: Instant::now(),
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
        })
    }
}

pub fn router(state: Arc<AppState>, body_limit: usize) -> Router {
    Router::new()
        .route("/v1/reward", post(reward))
        .route("/v1/eval", post(start_eval))
        .route("/v1/jobs/{id}", get(job))
        .route("/v1/health", get(health))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    let body = json!({"schema_version": SCHEMA_VERSION, "error": message.into()});
    (status, Json(body)).into_response()
}

fn authorized(state: &AppState, headers: &HeaderMap) -> Result<(), Response> {
    let Some(token) = &state.auth_token else {
        return Ok(());
    };
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given == Some(token.as_str()) {
        Ok(())
    } else {
        Err(error(StatusCode::UNAUTHORIZED, "missing or invalid bearer token"))
    }
}

fn parse<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")))
}

/// Scores a group exactly as a library caller would.
pub fn score_request(req: &RewardRequest, weights: &RewardWeights, gateway: &Gateway) -> RewardResponse {
    let code = SourceFile::parse(&req.code);
    let rewards = score_group(&code, &req.ground_truth, &req.candidates, weights, gateway);
    let scalars: Vec<f64> = rewards.iter().map(|r| r.scalar).collect();
    RewardResponse {
        schema_version: SCHEMA_VERSION,
        advantages: grpo::advantages(&scalars),
        rewards,
    }
}

async fn reward(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    if let Err(r) = authorized(&state, &headers) {
        return r;
    }
    let req: RewardRequest = match parse(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    if req.candidates.is_empty() {
        return error(StatusCode::BAD_REQUEST, "candidates must not be empty");
    }
    let st = state.clone();
    let scored = tokio::task::spawn_blocking(move || {
        st.gateway.version().map(|_| score_request(&req, &st.weights, &st.gateway))
    })
    .await;
    match scored {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => error(StatusCode::SERVICE_UNAVAILABLE, format!("verifier unavailable: {e}")),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn start_eval(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    if let Err(r) = authorized(&state, &headers) {
        return r;
    }
    let req: EvalRequest = match parse(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    if req.records.is_empty() {
        return error(StatusCode::BAD_REQUEST, "records must not be empty");
    }
    let job_id = format!("job-{}", state.next_job.fetch_add(1, Ordering::Relaxed));
    let running = Job {
        schema_version: SCHEMA_VERSION,
        job_id: job_id.clone(),
        status: JobStatus::Running,
        report: None,
        error: None,
    };
    state.jobs.lock().unwrap().insert(job_id.clone(), running.clone());
    let st = state.clone();
    tokio::task::spawn_blocking(move || {
        let opts = EvalOptions {
            k_values: req.k,
            ..EvalOptions::default()
        };
        let done = match evaluate(&req.records, &st.weights, &st.gateway, &opts) {
            Ok(out) => Job {
                status: JobStatus::Done,
                report: Some(out.report),
                ..running
            },
            Err(e) => Job {
                status: JobStatus::Failed,
                error: Some(e.to_string()),
                ..running
            },
        };
        st.jobs.lock().unwrap().insert(done.job_id.clone(), done);
    });
    let body = json!({"schema_version": SCHEMA_VERSION, "job_id": job_id});
    (StatusCode::ACCEPTED, Json(body)).into_response()
}

async fn job(State(state): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    if let Err(r) = authorized(&state, &headers) {
        return r;
    }
    match state.jobs.lock().unwrap().get(&id) {
        Some(job) => Json(job.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no job `{id}`")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub schema_version: u32,
    pub verifier_version: String,
    /// Counters as they stood before this check's probe.
    pub cache_stats: CacheStats,
    pub uptime_seconds: f64,
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let stats = state.gateway.cache_stats();
    let st = state.clone();
    let probed = tokio::task::spawn_blocking(move || {
        let version = st.gateway.version()?;
        let outcome = st.gateway.verify(PROBE_PROGRAM);
        if outcome.verdict == Verdict::ToolError {
            return Err(outcome.render_diagnostics());
        }
        Ok(version)
    })
    .await;
    match probed {
        Ok(Ok(verifier_version)) => Json(Health {
            schema_version: SCHEMA_VERSION,
            verifier_version,
            cache_stats: stats,
            uptime_seconds: state.started.elapsed().as_secs_f64(),
        })
        .into_response(),
        Ok(Err(e)) => error(StatusCode::SERVICE_UNAVAILABLE, format!("verifier probe failed: {e}")),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Binds and serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>, body_limit: usize) -> std::io::Result<()> {
    axum::serve(listener, router(state, body_limit))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
