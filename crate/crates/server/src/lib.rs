//! HTTP/JSON facade over the test pipeline, organised as sessions that
//! collect contracts and cases step by step before running them.
//!
//! | route | success |
//! |---|---|
//! | `POST /sessions` | 201 `{"id"}` |
//! | `POST /sessions/{id}/contracts` `{name, source}` | 200 variable listing |
//! | `PUT /sessions/{id}/case` | 200 `{"dbdl"}` |
//! | `POST /sessions/{id}/run` `{threshold?, step_limit?, jobs?}` | 200 report |
//! | `GET /sessions/{id}/report` | 200 latest report |
//! | `GET /health` | 200 |
//!
//! Unknown or expired sessions give 404, invalid input 422 with the same
//! error JSON the command-line tool prints, and a second concurrent run on
//! one session 409.

pub mod form;
pub mod session;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

use kaya_core::pipeline::{render_variables, run_pipeline, InputError, PipelineOptions};
use kaya_core::report::ReportFormat;

pub use form::CaseForm;
pub use session::{Store, StoreError, DEFAULT_TTL};

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub ttl: Duration,
    pub state_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            ttl: DEFAULT_TTL,
            state_dir: None,
        }
    }
}

#[derive(Debug)]
enum ApiError {
    NotFound,
    NoReport,
    Busy,
    Input(InputError),
    Internal(String),
}

impl From<InputError> for ApiError {
    fn from(e: InputError) -> Self {
        ApiError::Input(e)
    }
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotFound => (
                StatusCode::NOT_FOUND,
                json!({"error": "unknown or expired session"}).to_string(),
            ),
            ApiError::NoReport => (
                StatusCode::NOT_FOUND,
                json!({"error": "no report yet"}).to_string(),
            ),
            ApiError::Busy => (
                StatusCode::CONFLICT,
                json!({"error": "a run is already in progress"}).to_string(),
            ),
            ApiError::Input(e) => (StatusCode::UNPROCESSABLE_ENTITY, e.to_json()),
            ApiError::Internal(m) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"error": m}).to_string(),
            ),
        };
        json_response(status, body.into_bytes())
    }
}

type ApiResult = Result<Response, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::Input(InputError::single("Json", format!("request body: {e}"))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractBody {
    name: String,
    source: String,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBody {
    threshold: Option<f64>,
    step_limit: Option<u64>,
    jobs: Option<usize>,
}

async fn health() -> Response {
    json_response(StatusCode::OK, br#"{"status":"ok"}"#.to_vec())
}

async fn create(State(store): State<Arc<Store>>) -> Response {
    let id = store.create();
    json_response(
        StatusCode::CREATED,
        json!({ "id": id }).to_string().into_bytes(),
    )
}

async fn add_contract(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    let session = store.get(&id).ok_or(ApiError::NotFound)?;
    let body: ContractBody = parse_body(&body)?;
    let mut s = session.lock().await;
    let listing = s.upload(&body.name, &body.source)?;
    store.persist(&s);
    Ok(json_response(
        StatusCode::OK,
        render_variables(&listing, ReportFormat::Json),
    ))
}

async fn put_case(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    let session = store.get(&id).ok_or(ApiError::NotFound)?;
    let form: CaseForm = parse_body(&body)?;
    let mut s = session.lock().await;
    let dbdl = s.put_case(&form)?;
    store.persist(&s);
    Ok(json_response(
        StatusCode::OK,
        json!({ "dbdl": dbdl }).to_string().into_bytes(),
    ))
}

async fn run(State(store): State<Arc<Store>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let session = store.get(&id).ok_or(ApiError::NotFound)?;
    let body: RunBody = if body.iter().all(u8::is_ascii_whitespace) {
        RunBody::default()
    } else {
        parse_body(&body)?
    };
    let mut options = PipelineOptions::default();
    options.threshold = body.threshold.unwrap_or(options.threshold);
    options.run.step_limit = body.step_limit.unwrap_or(options.run.step_limit);
    options.run.jobs = body.jobs.unwrap_or(options.run.jobs);
    options.check()?;
    let (units, suite) = {
        let mut s = session.lock().await;
        if s.running {
            return Err(ApiError::Busy);
        }
        if s.cases.is_empty() {
            return Err(
                InputError::single("NoCases", "the session has no test cases".into()).into(),
            );
        }
        s.running = true;
        (s.units(), s.suite())
    };
    let outcome = tokio::task::spawn_blocking(move || {
        run_pipeline(&units, &suite, &options).map(|out| out.render(ReportFormat::Json))
    })
    .await;
    let mut s = session.lock().await;
    s.running = false;
    match outcome {
        Ok(Ok(bytes)) => {
            s.report = Some(bytes.clone());
            store.persist(&s);
            Ok(json_response(StatusCode::OK, bytes))
        }
        Ok(Err(e)) => Err(e.into()),
        Err(e) => Err(ApiError::Internal(format!("run aborted: {e}"))),
    }
}

async fn report(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult {
    let session = store.get(&id).ok_or(ApiError::NotFound)?;
    let s = session.lock().await;
    let bytes = s.report.clone().ok_or(ApiError::NoReport)?;
    Ok(json_response(StatusCode::OK, bytes))
}

/// True for `http(s)://localhost`, `127.0.0.1` and `[::1]` on any port.
pub fn is_local_origin(origin: &str) -> bool {
    let Some(rest) = origin
        .strip_prefix("http://")
        .or_else(|| origin.strip_prefix("https://"))
    else {
        return false;
    };
    let host = if rest.starts_with('[') {
        rest.split_inclusive(']').next().unwrap_or("")
    } else {
        rest.split(':').next().unwrap_or("")
    };
    let tail = &rest[host.len()..];
    let port_ok = tail.is_empty()
        || tail
            .strip_prefix(':')
            .is_some_and(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()));
    port_ok && matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

pub fn router(store: Arc<Store>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin: &HeaderValue, _| {
            origin.to_str().is_ok_and(is_local_origin)
        }))
        .allow_methods([Method::GET, Method::POST, Method::PUT])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}/contracts", post(add_contract))
        .route("/sessions/{id}/case", put(put_case))
        .route("/sessions/{id}/run", post(run))
        .route("/sessions/{id}/report", get(report))
        .layer(cors)
        .with_state(store)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    config: ServerConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let store = Arc::new(Store::new(config.ttl, config.state_dir)?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServeError::Io)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("server: {0}")]
    Io(std::io::Error),
}
