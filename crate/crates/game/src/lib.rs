//! HTTP service for the dot-drawing game and the click-line game.
//!
//! | Method | Path | |
//! |---|---|---|
//! | POST | `/api/detect` | `{"pattern": PatternFile, "config": DetectOptions}` → detection list |
//! | POST | `/api/archive` | `{"pattern", "config", "note"?, "parent"?}` → stored entry |
//! | GET | `/api/archive?page=&per_page=` | entries, newest first |
//! | GET | `/api/archive/{id}` | one entry |
//! | GET | `/api/archive/{id}/ancestry` | entry and its parents |
//! | GET | `/api/game/clickline/next?session=` | stimulus without its truth |
//! | POST | `/api/game/clickline/answer` | `{"session", "stimulus_id", "x", "y"}` → score |
//!
//! Everything else is served from the UI directory when one is configured.

pub mod archive;
pub mod clickline;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use gestalt_core::format::{self, RawPattern};
use gestalt_core::geometry::Point;
use gestalt_core::pipeline::{self, DetectOptions, DetectionJson};

use archive::{Archive, ArchiveEntry, ArchiveError, NewEntry};
use clickline::{ClicklineConfig, ClicklineError, Sessions};

pub const DEFAULT_N_CAP: usize = 2000;
pub const DEFAULT_PER_PAGE: usize = 20;
pub const MAX_PER_PAGE: usize = 200;

#[derive(Debug, Clone)]
pub struct Config {
    pub bind: SocketAddr,
    pub archive_path: PathBuf,
    pub n_cap: usize,
    pub ui_dir: Option<PathBuf>,
    pub clickline: ClicklineConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            archive_path: PathBuf::from("archive.ndjson"),
            n_cap: DEFAULT_N_CAP,
            ui_dir: None,
            clickline: ClicklineConfig::default(),
        }
    }
}

impl Config {
    /// Reads `GESTALT_BIND`, `GESTALT_ARCHIVE`, `GESTALT_N_CAP` and
    /// `GESTALT_UI_DIR`, keeping defaults for unset variables.
    pub fn from_env() -> Result<Self, String> {
        let mut cfg = Config::default();
        if let Ok(v) = std::env::var("GESTALT_BIND") {
            cfg.bind = v.parse().map_err(|e| format!("GESTALT_BIND: {e}"))?;
        }
        if let Ok(v) = std::env::var("GESTALT_ARCHIVE") {
            cfg.archive_path = v.into();
        }
        if let Ok(v) = std::env::var("GESTALT_N_CAP") {
            cfg.n_cap = v.parse().map_err(|e| format!("GESTALT_N_CAP: {e}"))?;
        }
        if let Ok(v) = std::env::var("GESTALT_UI_DIR") {
            cfg.ui_dir = Some(v.into());
        }
        Ok(cfg)
    }
}

pub struct AppState {
    pub n_cap: usize,
    pub archive: Archive,
    pub sessions: Sessions,
}

pub fn build_state(config: &Config) -> Result<Arc<AppState>, ArchiveError> {
    Ok(Arc::new(AppState {
        n_cap: config.n_cap,
        archive: Archive::open(&config.archive_path)?,
        sessions: Sessions::new(config.clickline.clone()),
    }))
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/detect", post(detect))
        .route("/api/archive", post(archive_post).get(archive_list))
        .route("/api/archive/{id}", get(archive_get))
        .route("/api/archive/{id}/ancestry", get(archive_ancestry))
        .route("/api/game/clickline/next", get(clickline_next))
        .route("/api/game/clickline/answer", post(clickline_answer))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Error response: status plus `{"error": message}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = format::to_json(&serde_json::json!({ "error": self.message }));
        (self.status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

impl From<gestalt_core::Error> for ApiError {
    fn from(e: gestalt_core::Error) -> Self {
        if e.is_validation() {
            ApiError::bad_request(e.to_string())
        } else {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
        }
    }
}

impl From<ClicklineError> for ApiError {
    fn from(e: ClicklineError) -> Self {
        let status = match e {
            ClicklineError::UnknownSession => StatusCode::NOT_FOUND,
            ClicklineError::NotServed | ClicklineError::WrongStimulus(_) => StatusCode::CONFLICT,
            ClicklineError::OutsideDomain | ClicklineError::NonFinite => StatusCode::BAD_REQUEST,
            ClicklineError::Generation(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        format::to_json(value),
    )
        .into_response()
}

fn prefix(field: &str, e: gestalt_core::Error) -> ApiError {
    let err = ApiError::from(e);
    if err.status == StatusCode::BAD_REQUEST {
        ApiError::bad_request(format!("{field}.{}", err.message))
    } else {
        err
    }
}

#[derive(Deserialize)]
struct DetectRequest {
    pattern: RawPattern,
    #[serde(default)]
    config: DetectOptions,
}

/// Validate and run a detection, returning the canonical pattern, the
/// options and the detection document.
async fn run_detection(
    state: &AppState,
    pattern: RawPattern,
    config: DetectOptions,
) -> Result<(RawPattern, String), ApiError> {
    let pattern = pattern.validate().map_err(|e| prefix("pattern", e))?;
    if pattern.len() > state.n_cap {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("pattern: {} elements exceed the cap of {}", pattern.len(), state.n_cap),
        ));
    }
    config.validate().map_err(|e| prefix("config", e))?;
    let canonical = RawPattern::from(&pattern);
    let body = tokio::task::spawn_blocking(move || pipeline::detect_pattern(&pattern, &config))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| prefix("pattern", e))?;
    Ok((canonical, body))
}

async fn detect(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: DetectRequest = parse_body(&body)?;
    let (_, body) = run_detection(&state, req.pattern, req.config).await?;
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/json")],
        body,
    )
        .into_response())
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let text = std::str::from_utf8(body).map_err(|_| ApiError::bad_request("body: not UTF-8"))?;
    format::from_json(text).map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Deserialize)]
struct ArchiveRequest {
    pattern: RawPattern,
    #[serde(default)]
    config: DetectOptions,
    #[serde(default)]
    note: Option<String>,
    #[serde(default)]
    parent: Option<u64>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

async fn archive_post(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: ArchiveRequest = parse_body(&body)?;
    let config = req.config.clone();
    let (pattern, detections) = run_detection(&state, req.pattern, req.config).await?;
    let detections: Vec<DetectionJson> =
        format::from_json(&detections).expect("detection document parses");
    let entry = state
        .archive
        .append(
            NewEntry {
                pattern,
                config,
                detections,
                note: req.note,
                parent: req.parent,
            },
            now_ms(),
        )
        .map_err(|e| match e {
            ArchiveError::UnknownParent(_) => ApiError::bad_request(e.to_string()),
            ArchiveError::Io { .. } => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        })?;
    Ok(json_response(StatusCode::CREATED, &entry))
}

#[derive(Deserialize)]
struct PageQuery {
    #[serde(default)]
    page: usize,
    per_page: Option<usize>,
}

#[derive(Serialize)]
struct ArchivePage {
    page: usize,
    per_page: usize,
    total: usize,
    entries: Vec<ArchiveEntry>,
}

async fn archive_list(
    State(state): State<Arc<AppState>>,
    Query(q): Query<PageQuery>,
) -> Result<Response, ApiError> {
    let per_page = q.per_page.unwrap_or(DEFAULT_PER_PAGE);
    if per_page == 0 || per_page > MAX_PER_PAGE {
        return Err(ApiError::bad_request(format!(
            "per_page: must be in [1, {MAX_PER_PAGE}]"
        )));
    }
    let page = ArchivePage {
        page: q.page,
        per_page,
        total: state.archive.len(),
        entries: state.archive.page(q.page, per_page),
    };
    Ok(json_response(StatusCode::OK, &page))
}

fn not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, format!("id: unknown entry {id}"))
}

async fn archive_get(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let entry = id
        .parse()
        .ok()
        .and_then(|n| state.archive.get(n))
        .ok_or_else(|| not_found(&id))?;
    Ok(json_response(StatusCode::OK, &entry))
}

async fn archive_ancestry(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let chain = id
        .parse()
        .ok()
        .and_then(|n| state.archive.ancestry(n))
        .ok_or_else(|| not_found(&id))?;
    Ok(json_response(StatusCode::OK, &chain))
}

#[derive(Deserialize)]
struct NextQuery {
    session: Option<String>,
}

async fn clickline_next(
    State(state): State<Arc<AppState>>,
    Query(q): Query<NextQuery>,
) -> Result<Response, ApiError> {
    let served = tokio::task::spawn_blocking(move || state.sessions.next(q.session.as_deref()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(json_response(StatusCode::OK, &served))
}

#[derive(Deserialize)]
struct AnswerRequest {
    session: String,
    stimulus_id: String,
    x: f64,
    y: f64,
}

async fn clickline_answer(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: AnswerRequest = parse_body(&body)?;
    let result = state
        .sessions
        .answer(&req.session, &req.stimulus_id, Point::new(req.x, req.y))?;
    Ok(json_response(StatusCode::OK, &result))
}

/// Bind and serve until the process is stopped.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let state = build_state(&config).map_err(std::io::Error::other)?;
    let skipped = state.archive.skipped_lines();
    if !skipped.is_empty() {
        eprintln!("archive: skipped unreadable lines {skipped:?}");
    }
    let app = router(state, config.ui_dir.clone());
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
