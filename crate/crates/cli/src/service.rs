//! HTTP service over a shared telemetry store.
//!
//! `POST /v1/readings` takes NDJSON readings, `GET /v1/meters` lists meters,
//! `GET /v1/meters/{id}/power` returns 15-minute power and
//! `GET /v1/meters/{id}/anomalies` runs the same analysis as `enwell analyze`.

use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use enwell_core::analytics::AnomalyReport;
use enwell_core::pipeline::{analyze_meter, AnalysisConfig, KChoice, PipelineError};
use enwell_core::protocol::ObisCode;
use enwell_core::store::{parse_ndjson, PowerSample, StoreError, StoreStats, TelemetryStore};
use serde::Deserialize;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<RwLock<TelemetryStore>>,
    /// Analysis settings used when a query leaves them unset.
    pub defaults: AnalysisConfig,
}

impl AppState {
    pub fn new(store: TelemetryStore, defaults: AnalysisConfig) -> Self {
        Self {
            store: Arc::new(RwLock::new(store)),
            defaults,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::Parse { .. } => StatusCode::BAD_REQUEST,
            StoreError::ConflictingDuplicate { .. } => StatusCode::CONFLICT,
            StoreError::NonMonotonicRegister { .. } | StoreError::NegativeValue { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            StoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::UnknownMeter(_) | PipelineError::NoReadings => StatusCode::NOT_FOUND,
            PipelineError::InvalidConfig(_) => StatusCode::BAD_REQUEST,
            e if e.is_insufficient_data() => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }
}

fn poisoned<T>(_: T) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store lock poisoned")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/readings", post(ingest))
        .route("/v1/meters", get(meters))
        .route("/v1/meters/{id}/power", get(power))
        .route("/v1/meters/{id}/anomalies", get(anomalies))
        .with_state(state)
}

async fn ingest(State(state): State<AppState>, body: String) -> Result<Json<StoreStats>, ApiError> {
    let readings = parse_ndjson(&body)?;
    let stats = tokio::task::spawn_blocking(move || {
        let mut store = state.store.write().map_err(poisoned)?;
        store.ingest(readings).map_err(ApiError::from)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(stats))
}

async fn meters(State(state): State<AppState>) -> Result<Json<Vec<String>>, ApiError> {
    Ok(Json(state.store.read().map_err(poisoned)?.meters()))
}

#[derive(Debug, Deserialize)]
pub struct PowerQuery {
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
}

async fn power(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PowerQuery>,
) -> Result<Json<Vec<PowerSample>>, ApiError> {
    let store = state.store.read().map_err(poisoned)?;
    let register = ObisCode::POSITIVE_ACTIVE;
    let Some((first, last)) = store.extent(&id, register) else {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("unknown meter {id:?}"),
        ));
    };
    let from = q.from.unwrap_or(first);
    let to = q.to.unwrap_or(last);
    if from > to {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "from must not be after to",
        ));
    }
    Ok(Json(store.mean_power_series(&id, register, from, to)))
}

#[derive(Debug, Default, Deserialize)]
pub struct AnomalyQuery {
    pub k: Option<String>,
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub min_completeness: Option<f64>,
    pub top_n: Option<usize>,
}

impl AnomalyQuery {
    pub fn apply(&self, defaults: &AnalysisConfig) -> Result<AnalysisConfig, String> {
        let mut cfg = *defaults;
        if let Some(k) = &self.k {
            cfg.k = k.parse::<KChoice>()?;
        }
        if let Some(seed) = self.seed {
            cfg.kmeans.seed = seed;
        }
        if let Some(r) = self.restarts {
            cfg.kmeans.restarts = r;
        }
        if let Some(m) = self.max_iters {
            cfg.kmeans.max_iters = m;
        }
        if let Some(t) = self.tol {
            cfg.kmeans.tol = t;
        }
        if let Some(c) = self.min_completeness {
            cfg.min_completeness = c;
        }
        if let Some(n) = self.top_n {
            cfg.top_n = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

async fn anomalies(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<AnomalyQuery>,
) -> Result<Json<AnomalyReport>, ApiError> {
    let cfg = q
        .apply(&state.defaults)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    let report = tokio::task::spawn_blocking(move || {
        let store = state.store.read().map_err(poisoned)?;
        analyze_meter(&store, &id, &cfg)
            .map(|a| a.anomalies)
            .map_err(ApiError::from)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(report))
}

/// Runs the service until interrupted.
pub fn serve(data_dir: &Path, addr: &str, defaults: AnalysisConfig) -> anyhow::Result<()> {
    let store = crate::commands::open_store(data_dir)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(AppState::new(store, defaults)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
