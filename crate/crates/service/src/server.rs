//! HTTP endpoints: `/stream` (newline-delimited records), `/control`, `/status`,
//! `/annotate`, `/session` and `/schema`.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream;
use nirs_core::types::Marker;
use nirs_core::{PipelineConfig, SimulationConfig};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use crate::control::ControlDocument;
use crate::record::{StatusRecord, StreamRecord, SCHEMA_JSON, SCHEMA_VERSION};
use crate::session::{SessionError, SessionManager, SessionSpec, SessionSummary, SourceSpec};

pub const DEFAULT_PORT: u16 = 8765;
/// Environment variable that overrides the default port.
pub const PORT_ENV: &str = "FNIRS_TWIN_PORT";

#[derive(Clone, Debug, PartialEq)]
pub struct ServerConfig {
    pub bind: IpAddr,
    pub port: u16,
    /// Parent directory for sessions started over HTTP.
    pub sessions_dir: PathBuf,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            sessions_dir: PathBuf::from("sessions"),
        }
    }
}

impl ServerConfig {
    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}

#[derive(Clone)]
struct AppState {
    manager: Arc<SessionManager>,
    sessions_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::Busy | SessionError::NotStreaming | SessionError::NoCommands(_) => StatusCode::CONFLICT,
            SessionError::NoSession => StatusCode::NOT_FOUND,
            SessionError::Control(_) | SessionError::NegativeTime | SessionError::InvalidConfig(_) => {
                StatusCode::BAD_REQUEST
            }
            SessionError::SourceUnavailable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Timeout(_) => StatusCode::GATEWAY_TIMEOUT,
            SessionError::Recorder(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

pub fn router(manager: Arc<SessionManager>, sessions_dir: PathBuf) -> Router {
    Router::new()
        .route("/stream", get(stream_records))
        .route("/control", post(control))
        .route("/status", get(status))
        .route("/annotate", post(annotate))
        .route("/session", post(start_session).delete(stop_session))
        .route("/schema", get(schema))
        .with_state(AppState { manager, sessions_dir })
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    manager: Arc<SessionManager>,
    sessions_dir: PathBuf,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(manager, sessions_dir)).with_graceful_shutdown(shutdown).await
}

async fn stream_records(State(app): State<AppState>) -> Response {
    let rx = app.manager.subscribe();
    let first = app.manager.current().map(|s| StreamRecord::Status(Box::new(s.status())));
    let lines = stream::unfold((rx, first, 0u64), |(mut rx, first, mut dropped)| async move {
        if let Some(record) = first {
            return Some((Ok::<_, std::convert::Infallible>(record.to_line()), (rx, None, dropped)));
        }
        match rx.recv().await {
            Ok(record) => Some((Ok(record.to_line()), (rx, None, dropped))),
            Err(RecvError::Lagged(n)) => {
                dropped += n;
                let lag = StreamRecord::Lag { t_s: 0.0, dropped };
                Some((Ok(lag.to_line()), (rx, None, dropped)))
            }
            Err(RecvError::Closed) => None,
        }
    });
    ([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(lines)).into_response()
}

async fn control(State(app): State<AppState>, body: String) -> Result<Response, ApiError> {
    let doc = ControlDocument::parse(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let manager = app.manager.clone();
    let ack = tokio::task::spawn_blocking(move || manager.control(&doc))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(StreamRecord::Ack(ack)).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatusResponse {
    pub schema_version: u32,
    pub subscribers: usize,
    pub session: Option<StatusRecord>,
    pub pipeline: Option<PipelineConfig>,
}

async fn status(State(app): State<AppState>) -> Json<StatusResponse> {
    let current = app.manager.current();
    Json(StatusResponse {
        schema_version: SCHEMA_VERSION,
        subscribers: app.manager.subscriber_count(),
        session: current.as_ref().map(|s| s.status()),
        pipeline: current.as_ref().map(|s| s.pipeline_config().clone()),
    })
}

#[derive(Debug, Deserialize)]
struct AnnotateRequest {
    label: String,
    t_s: f64,
}

#[derive(Debug, Serialize)]
struct AnnotateResponse {
    markers: Vec<Marker>,
}

async fn annotate(
    State(app): State<AppState>,
    Json(req): Json<AnnotateRequest>,
) -> Result<Json<AnnotateResponse>, ApiError> {
    Ok(Json(AnnotateResponse { markers: app.manager.annotate(&req.label, req.t_s)? }))
}

#[derive(Debug, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
enum StartRequest {
    Sim {
        #[serde(default)]
        config: Option<Box<SimulationConfig>>,
        #[serde(default)]
        speed: Option<f64>,
        #[serde(default)]
        duration_s: Option<f64>,
    },
    Replay {
        path: PathBuf,
        #[serde(default)]
        speed: Option<f64>,
    },
    Serial {
        path: PathBuf,
    },
}

#[derive(Debug, Serialize)]
struct StartResponse {
    session_id: u64,
    dir: PathBuf,
}

async fn start_session(
    State(app): State<AppState>,
    Json(req): Json<StartRequest>,
) -> Result<Json<StartResponse>, ApiError> {
    let (source, speed, duration_s) = match req {
        StartRequest::Sim { config, speed, duration_s } => {
            (SourceSpec::Sim(config.unwrap_or_default()), speed, duration_s)
        }
        StartRequest::Replay { path, speed } => (SourceSpec::Replay { path }, speed, None),
        StartRequest::Serial { path } => (SourceSpec::Serial { path }, None, None),
    };
    let manager = app.manager.clone();
    let base = app.sessions_dir.clone();
    let (id, dir) = tokio::task::spawn_blocking(move || {
        let dir = base.join(session_dir_name());
        let spec = SessionSpec { speed: speed.unwrap_or(1.0), duration_s, ..SessionSpec::new(source, &dir) };
        manager.start(spec).map(|id| (id, dir))
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(StartResponse { session_id: id, dir }))
}

#[derive(Debug, Serialize)]
struct StopResponse {
    session_id: u64,
    dir: PathBuf,
    frames_recorded: u64,
    error: Option<String>,
    export_error: Option<String>,
}

impl From<SessionSummary> for StopResponse {
    fn from(s: SessionSummary) -> Self {
        StopResponse {
            session_id: s.session_id,
            dir: s.dir,
            frames_recorded: s.frames_recorded,
            error: s.error,
            export_error: s.export_error,
        }
    }
}

async fn stop_session(State(app): State<AppState>) -> Result<Json<StopResponse>, ApiError> {
    let manager = app.manager.clone();
    let summary = tokio::task::spawn_blocking(move || manager.stop())
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(summary.into()))
}

async fn schema() -> Response {
    ([(header::CONTENT_TYPE, "application/schema+json")], SCHEMA_JSON).into_response()
}

/// Directory name for a new session: seconds and milliseconds since the Unix epoch.
pub fn session_dir_name() -> String {
    let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default();
    format!("{}-{:03}", now.as_secs(), now.subsec_millis())
}
