//! Annotation service: task assignment, judgment collection and live
//! aggregation over a JSON API.
//!
//! All state sits behind one mutex, so judgment appends are serialized and
//! the log never interleaves partial lines.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use taxoq_core::annotation::{
    parse_judgment_request, AggregateReport, AnnotationError, AnnotationTask, FieldError, Judgment, JudgmentStore,
    Progress, TaskKind, TaskTable,
};

struct Inner {
    tasks: TaskTable,
    store: JudgmentStore,
}

pub struct AppState {
    inner: Mutex<Inner>,
    token: Option<String>,
}

impl AppState {
    pub fn new(tasks: Vec<AnnotationTask>, store: JudgmentStore, token: Option<String>) -> Result<Arc<Self>, AnnotationError> {
        let tasks = TaskTable::new(tasks)?;
        // a log from another bundle would silently skew the report
        for j in store.judgments() {
            if tasks.get(&j.task_id).is_none() {
                return Err(AnnotationError::UnknownTask(j.task_id));
            }
        }
        Ok(Arc::new(AppState {
            inner: Mutex::new(Inner { tasks, store }),
            token: token.filter(|t| !t.is_empty()),
        }))
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // a panicked handler leaves the data consistent: submit appends
        // before mutating the in-memory map
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn report(&self) -> AggregateReport {
        let inner = self.lock();
        AggregateReport::compute(inner.tasks.tasks(), &inner.store.judgments())
    }
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub field_errors: Vec<FieldError>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            field_errors: Vec::new(),
        }
    }

    fn fields(errors: Vec<FieldError>) -> Self {
        ApiError {
            field_errors: errors,
            ..ApiError::new(StatusCode::BAD_REQUEST, "malformed", "the request has invalid fields")
        }
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        match e {
            AnnotationError::Malformed(errors) => ApiError::fields(errors),
            AnnotationError::UnknownTask(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_task", e.to_string()),
            AnnotationError::KindMismatch { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "kind_mismatch", e.to_string())
            }
            AnnotationError::InvalidArgument(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_argument", e.to_string()),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/judgments", post(submit_judgment))
        .route("/api/judgments/{task_id}/{annotator}", get(get_judgment))
        .route("/api/report", get(report))
        .route("/api/progress", get(progress))
        .layer(middleware::from_fn_with_state(state.clone(), authorize))
        .with_state(state)
}

async fn authorize(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(request).await
}

async fn next_task(
    State(state): State<Arc<AppState>>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let mut errors = Vec::new();
    let annotator = match params.get("annotator").map(|s| s.trim()) {
        Some(a) if !a.is_empty() => Some(a.to_string()),
        _ => {
            errors.push(FieldError::new("annotator", "is required"));
            None
        }
    };
    let kind = match params.get("kind").filter(|k| !k.is_empty()) {
        None => None,
        Some(k) => match k.parse::<TaskKind>() {
            Ok(k) => Some(k),
            Err(_) => {
                errors.push(FieldError::new("kind", "must be PAIRWISE, SKILL or KNOWLEDGE"));
                None
            }
        },
    };
    let Some(annotator) = annotator.filter(|_| errors.is_empty()) else {
        return Err(ApiError::fields(errors));
    };
    let mut guard = state.lock();
    let inner = &mut *guard;
    Ok(match inner.tasks.next_for(&annotator, kind, &inner.store) {
        Some(task) => Json(task.view()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| u64::try_from(d.as_millis()).unwrap_or(u64::MAX))
}

async fn submit_judgment(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let value: Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::fields(vec![FieldError::new("", format!("body is not valid JSON: {e}"))]))?;
    let request = parse_judgment_request(&value)?;
    let judgment = Judgment {
        task_id: request.task_id,
        annotator_id: request.annotator_id,
        verdict: request.verdict,
        timestamp: now_millis(),
    };
    let mut guard = state.lock();
    let inner = &mut *guard;
    let outcome = inner.store.submit(&inner.tasks, judgment.clone())?;
    let mut body = json!({ "judgment": judgment, "overwritten": outcome.overwritten });
    if outcome.overwritten {
        body["warning"] = json!("replaced an earlier judgment by the same annotator");
    }
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_judgment(
    State(state): State<Arc<AppState>>,
    Path((task_id, annotator)): Path<(String, String)>,
) -> Result<Json<Judgment>, ApiError> {
    let inner = state.lock();
    inner
        .store
        .get(&task_id, &annotator)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such judgment"))
}

async fn report(State(state): State<Arc<AppState>>) -> Json<AggregateReport> {
    Json(state.report())
}

async fn progress(State(state): State<Arc<AppState>>) -> Json<Progress> {
    let inner = state.lock();
    Json(Progress::compute(&inner.tasks, &inner.store))
}
