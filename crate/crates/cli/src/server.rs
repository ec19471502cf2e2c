//! JSON annotation service under `/v1`.

use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hintgen_core::annotation::{to_jsonl, AnnotationStore, HintRatings, Phase, ProtocolError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub struct AppState {
    store: Mutex<AnnotationStore>,
    token: Option<String>,
    clock: Clock,
}

impl AppState {
    pub fn new(store: AnnotationStore, token: Option<String>) -> Self {
        AppState {
            store: Mutex::new(store),
            token,
            clock: Arc::new(|| {
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_millis() as u64)
                    .unwrap_or(0)
            }),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }
}

type Shared = Arc<AppState>;

pub struct ApiError(ProtocolError);

impl From<ProtocolError> for ApiError {
    fn from(e: ProtocolError) -> Self {
        ApiError(e)
    }
}

fn status_of(e: &ProtocolError) -> StatusCode {
    match e {
        ProtocolError::NotFound(_) => StatusCode::NOT_FOUND,
        ProtocolError::Conflict(_) => StatusCode::CONFLICT,
        ProtocolError::BadRequest(_) => StatusCode::BAD_REQUEST,
        ProtocolError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn error_body(status: StatusCode, code: &str, message: &str) -> Response {
    (status, Json(json!({"error": code, "message": message}))).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let msg = match &self.0 {
            ProtocolError::NotFound(m)
            | ProtocolError::Conflict(m)
            | ProtocolError::BadRequest(m)
            | ProtocolError::Storage(m) => m.clone(),
        };
        error_body(status_of(&self.0), self.0.code(), &msg)
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Body parsing that reports failures in the service's error format.
fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError(ProtocolError::BadRequest(e.to_string())))
}

fn parse_index(k: &str) -> ApiResult<usize> {
    k.parse().map_err(|_| {
        ApiError(ProtocolError::BadRequest(format!(
            "hint index {k:?} is not a number"
        )))
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    annotator_id: String,
    phase: Phase,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AttemptBody {
    answer: String,
}

#[derive(Serialize)]
struct HintBody {
    k: usize,
    hint: String,
}

async fn create_session(State(st): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let req: NewSession = parse(&body)?;
    let session = st
        .store
        .lock()
        .expect("store poisoned")
        .create_session(&req.annotator_id, req.phase)?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

async fn get_session(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let store = st.store.lock().expect("store poisoned");
    Ok(Json(store.session(&id)?).into_response())
}

async fn next_question(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let view = st
        .store
        .lock()
        .expect("store poisoned")
        .next_question(&id)?;
    Ok(match view {
        Some(v) => Json(v).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn attempt(
    State(st): State<Shared>,
    Path((id, q)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: AttemptBody = parse(&body)?;
    let now = (st.clock)();
    let out = st
        .store
        .lock()
        .expect("store poisoned")
        .attempt(&id, &q, &req.answer, now)?;
    Ok(Json(out).into_response())
}

async fn reveal(
    State(st): State<Shared>,
    Path((id, q)): Path<(String, String)>,
) -> ApiResult<Response> {
    let (k, hint) = st.store.lock().expect("store poisoned").reveal(&id, &q)?;
    Ok(Json(HintBody { k, hint }).into_response())
}

async fn get_hint(
    State(st): State<Shared>,
    Path((id, q, k)): Path<(String, String, String)>,
) -> ApiResult<Response> {
    let k = parse_index(&k)?;
    let hint = st.store.lock().expect("store poisoned").hint(&id, &q, k)?;
    Ok(Json(HintBody { k, hint }).into_response())
}

async fn rate(
    State(st): State<Shared>,
    Path((id, q, k)): Path<(String, String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let k = parse_index(&k)?;
    let ratings: HintRatings = parse(&body)?;
    st.store
        .lock()
        .expect("store poisoned")
        .rate(&id, &q, k, ratings)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn skip(
    State(st): State<Shared>,
    Path((id, q)): Path<(String, String)>,
) -> ApiResult<Response> {
    st.store.lock().expect("store poisoned").skip(&id, &q)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

fn ndjson(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn export_ratings(State(st): State<Shared>) -> Response {
    ndjson(to_jsonl(
        &st.store.lock().expect("store poisoned").export_ratings(),
    ))
}

async fn export_answers(State(st): State<Shared>) -> Response {
    ndjson(to_jsonl(
        &st.store.lock().expect("store poisoned").export_answers(),
    ))
}

async fn require_token(
    State(st): State<Shared>,
    headers: HeaderMap,
    req: Request,
    next: Next,
) -> Response {
    if let Some(token) = &st.token {
        let ok = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return error_body(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or wrong bearer token",
            );
        }
    }
    next.run(req).await
}

async fn fallback() -> Response {
    error_body(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: AppState) -> Router {
    let st: Shared = Arc::new(state);
    let q = "/sessions/{id}/questions/{qid}";
    let v1 = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/next-question", get(next_question))
        .route(&format!("{q}/attempt"), post(attempt))
        .route(&format!("{q}/reveal"), post(reveal))
        .route(&format!("{q}/hints/{{k}}"), get(get_hint))
        .route(&format!("{q}/hints/{{k}}/ratings"), post(rate))
        .route(&format!("{q}/skip"), post(skip))
        .route("/export/ratings.jsonl", get(export_ratings))
        .route("/export/answers.jsonl", get(export_answers))
        .layer(middleware::from_fn_with_state(st.clone(), require_token))
        .with_state(st);
    Router::new().nest("/v1", v1).fallback(fallback)
}
