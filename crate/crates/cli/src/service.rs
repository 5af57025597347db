//! Stateless JSON-over-HTTP facade. Each request is parsed, guarded,
//! computed on a blocking thread, and answered with the result, timing
//! diagnostics, and the digest of the request body.

use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use pap_core::gaussian::{MotivatingConfig, RuleKind};
use pap_core::ProblemSpec;

use crate::config::{decode, digest, parse_bytes};
use crate::error::{AppError, ErrorKind};
use crate::ops;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_CORS_ORIGIN: &str = "http://localhost:5173";
pub const DEFAULT_MAX_CELLS: usize = 4096;
const BODY_LIMIT: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub bind: String,
    /// Allowed browser origin; `None` disables CORS headers.
    pub cors_origin: Option<String>,
    pub max_cells: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: DEFAULT_BIND.into(),
            cors_origin: Some(DEFAULT_CORS_ORIGIN.into()),
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

impl ServiceConfig {
    /// Reads `PAP_BIND`, `PAP_CORS_ORIGIN` (empty disables CORS) and
    /// `PAP_MAX_CELLS`.
    pub fn from_env() -> Result<Self, AppError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, AppError> {
        let mut c = ServiceConfig::default();
        if let Some(b) = get("PAP_BIND") {
            c.bind = b;
        }
        if let Some(o) = get("PAP_CORS_ORIGIN") {
            c.cors_origin = (!o.is_empty()).then_some(o);
        }
        if let Some(m) = get("PAP_MAX_CELLS") {
            c.max_cells = m
                .parse()
                .ok()
                .filter(|&m: &usize| m > 0)
                .ok_or_else(|| AppError::usage(format!("PAP_MAX_CELLS must be a positive integer, got {m:?}")))?;
        }
        Ok(c)
    }
}

struct Limits {
    max_cells: usize,
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub runtime_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate_pivots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiResponse<T> {
    pub result: T,
    pub diagnostics: Diagnostics,
    /// SHA-256 of the request body's canonical JSON.
    pub digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SolveRequest {
    #[serde(flatten)]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub signal: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PowerRequest {
    #[serde(flatten)]
    pub config: MotivatingConfig,
    pub kinds: Vec<RuleKind>,
}

pub fn router(config: &ServiceConfig) -> Result<Router, AppError> {
    let limits = Arc::new(Limits { max_cells: config.max_cells });
    let mut app = Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/solve", post(solve))
        .route("/api/v1/power", post(power))
        .route("/api/v1/casestudy", post(casestudy))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(limits);
    if let Some(origin) = &config.cors_origin {
        let origin = HeaderValue::from_str(origin)
            .map_err(|_| AppError::usage(format!("invalid CORS origin {origin:?}")))?;
        app = app.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([axum::http::header::CONTENT_TYPE]),
        );
    }
    Ok(app)
}

pub async fn serve(config: ServiceConfig) -> Result<(), AppError> {
    let app = router(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|e| AppError::new(ErrorKind::Io, format!("cannot bind {}: {e}", config.bind)))?;
    eprintln!("listening on {}", config.bind);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AppError::new(ErrorKind::Io, format!("server error: {e}")))
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<(T, String), AppError> {
    let value = parse_bytes(body)?;
    let d = digest(&value);
    Ok((decode(value)?, d))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, AppError> + Send + 'static) -> Result<T, AppError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::new(ErrorKind::Internal, format!("worker failed: {e}")))?
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

async fn solve(State(limits): State<Arc<Limits>>, body: Bytes) -> Result<Json<ApiResponse<ops::SolveOutput>>, AppError> {
    let start = Instant::now();
    let (req, digest): (SolveRequest, String) = parse(&body)?;
    ops::guard_problem(&req.problem, limits.max_cells)?;
    let result = blocking(move || ops::solve(&req.problem, req.signal)).await?;
    let diagnostics = Diagnostics {
        runtime_ms: elapsed_ms(start),
        iterations: Some(result.solver.iterations),
        degenerate_pivots: Some(result.solver.degenerate_pivots),
        reps: None,
    };
    Ok(Json(ApiResponse { result, diagnostics, digest }))
}

async fn power(body: Bytes) -> Result<Json<ApiResponse<pap_core::gaussian::PowerCurve>>, AppError> {
    let start = Instant::now();
    let (req, digest): (PowerRequest, String) = parse(&body)?;
    let reps = req.config.reps;
    let result = blocking(move || ops::power(&req.config, &req.kinds)).await?;
    let diagnostics = Diagnostics { runtime_ms: elapsed_ms(start), iterations: None, degenerate_pivots: None, reps: Some(reps) };
    Ok(Json(ApiResponse { result, diagnostics, digest }))
}

async fn casestudy(
    State(limits): State<Arc<Limits>>,
    body: Bytes,
) -> Result<Json<ApiResponse<ops::CaseStudyResponse>>, AppError> {
    let start = Instant::now();
    let (req, digest): (ops::CaseStudyRequest, String) = parse(&body)?;
    ops::guard_casestudy(&req, limits.max_cells)?;
    let reps = req.mc.eval_reps;
    let result = blocking(move || ops::casestudy_single(&req)).await?;
    let lp = result.result.lp.as_ref();
    let diagnostics = Diagnostics {
        runtime_ms: elapsed_ms(start),
        iterations: lp.map(|l| l.solver.iterations),
        degenerate_pivots: lp.map(|l| l.solver.degenerate_pivots),
        reps: Some(reps),
    };
    Ok(Json(ApiResponse { result, diagnostics, digest }))
}
