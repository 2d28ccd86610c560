//! Story-service HTTP API over the file store.
//!
//! All routes live under `/v1/children/{id}` and require
//! `Authorization: Bearer <token>`. Errors come back as `{"error": ...}`
//! with 401, 404, 409, 422 or 502.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use ella_core::analytics::{compute_metrics, AnalyticsError, ChildMetrics};
use ella_core::pipeline::{DaySchedule, PackageStatus, Pipeline, PipelineError, ReviewAction, StoryPackage};
use ella_core::{ChildCurriculum, SessionLog};
use serde::{Deserialize, Serialize};

use crate::store::{DeliveryState, DiaryEntry, FileStore, LogFilter, StoreError};

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<FileStore>>,
    pipeline: Arc<Pipeline>,
    token: Arc<str>,
}

impl AppState {
    pub fn new(store: FileStore, pipeline: Pipeline, token: impl Into<String>) -> Self {
        Self { store: Arc::new(Mutex::new(store)), pipeline: Arc::new(pipeline), token: token.into().into() }
    }

    fn store(&self) -> MutexGuard<'_, FileStore> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::ConflictingSchedule { .. } | StoreError::AlreadyDelivered(_) | StoreError::DailyCapReached { .. } => {
                StatusCode::CONFLICT
            }
            StoreError::ValidationFailed(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Io { .. } | StoreError::Corrupt { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self(code, e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let code = match e.root() {
            PipelineError::NotPending(_) => StatusCode::CONFLICT,
            PipelineError::InvalidCurriculum(_) | PipelineError::InvalidConstraints(_) | PipelineError::EditViolatesConstraints(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::BAD_GATEWAY,
        };
        Self(code, e.to_string())
    }
}

fn unprocessable(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::UNPROCESSABLE_ENTITY, msg.into())
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn authorize(s: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    let given = headers.get("authorization").and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer "));
    if given == Some(&*s.token) {
        Ok(())
    } else {
        Err(ApiError(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into()))
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, ApiError> {
    serde_json::from_str(body).map_err(|e| unprocessable(e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn put_curriculum(State(s): State<AppState>, Path(id): Path<String>, headers: HeaderMap, body: String) -> ApiResult<ChildCurriculum> {
    authorize(&s, &headers)?;
    let c: ChildCurriculum = parse_body(&body)?;
    if c.child_id != id {
        return Err(unprocessable(format!("curriculum is for {}, not {id}", c.child_id)));
    }
    s.store().put_curriculum(&c)?;
    Ok(Json(c))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateRequest {
    pub seed: u64,
    pub auto_approve: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DaySummary {
    pub day_index: u32,
    pub story_ids: Vec<String>,
}

async fn generate(State(s): State<AppState>, Path(id): Path<String>, headers: HeaderMap, body: String) -> ApiResult<Vec<DaySummary>> {
    authorize(&s, &headers)?;
    let req: GenerateRequest = if body.trim().is_empty() { GenerateRequest::default() } else { parse_body(&body)? };
    let curriculum = s.store().curriculum(&id)?.clone();
    let pipeline = s.pipeline.clone();
    let mut days = blocking(move || pipeline.build_schedule(&curriculum, req.seed)).await??;
    if req.auto_approve {
        for p in days.iter_mut().flat_map(|d| d.stories.iter_mut()) {
            p.status = PackageStatus::Approved;
        }
    }
    s.store().put_schedule(&id, &days)?;
    Ok(Json(summaries(&days)))
}

fn summaries(days: &[DaySchedule]) -> Vec<DaySummary> {
    days.iter()
        .map(|d| DaySummary { day_index: d.day_index, story_ids: d.stories.iter().map(|p| p.story.story_id.clone()).collect() })
        .collect()
}

#[derive(Debug, Default, Deserialize)]
struct StoriesQuery {
    #[serde(default)]
    all: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DayStories {
    pub stories: Vec<StoryPackage>,
    pub delivery: DeliveryState,
}

async fn day_stories(
    State(s): State<AppState>,
    Path((id, day)): Path<(String, u32)>,
    Query(q): Query<StoriesQuery>,
    headers: HeaderMap,
) -> ApiResult<DayStories> {
    authorize(&s, &headers)?;
    let store = s.store();
    let (stories, delivery) = if q.all { store.all_stories(&id, day)? } else { store.fetch_day(&id, day)? };
    Ok(Json(DayStories { stories, delivery }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EditBody {
    body: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RegenerateBody {
    seed: u64,
}

/// `POST .../stories/{story_id}:{approve|edit|regenerate}`
async fn review(
    State(s): State<AppState>,
    Path((id, day, target)): Path<(String, u32, String)>,
    headers: HeaderMap,
    body: String,
) -> ApiResult<StoryPackage> {
    authorize(&s, &headers)?;
    let Some((story_id, verb)) = target.rsplit_once(':') else {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("no review action in {target:?}")));
    };
    let action = match verb {
        "approve" => ReviewAction::Approve,
        "edit" => ReviewAction::Edit(parse_body::<EditBody>(&body)?.body),
        "regenerate" => {
            let seed = if body.trim().is_empty() { 0 } else { parse_body::<RegenerateBody>(&body)?.seed };
            ReviewAction::Regenerate(seed)
        }
        other => return Err(ApiError(StatusCode::NOT_FOUND, format!("unknown review action {other:?}"))),
    };
    let (package, curriculum) = {
        let store = s.store();
        let (stories, delivery) = store.all_stories(&id, day)?;
        if delivery.delivered_story_ids.iter().any(|d| d == story_id) {
            return Err(StoreError::AlreadyDelivered(story_id.to_string()).into());
        }
        let package = stories
            .into_iter()
            .find(|p| p.story.story_id == story_id)
            .ok_or_else(|| StoreError::NotFound(format!("story {story_id} on day {day} of {id}")))?;
        (package, store.curriculum(&id)?.clone())
    };
    let pipeline = s.pipeline.clone();
    let reviewed = blocking(move || pipeline.review(&package, &action, &curriculum)).await??;
    s.store().replace_package(&id, day, &reviewed)?;
    Ok(Json(reviewed))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeliveredBody {
    pub story_id: String,
    #[serde(default)]
    pub at_ms: u64,
}

async fn delivered(
    State(s): State<AppState>,
    Path((id, day)): Path<(String, u32)>,
    headers: HeaderMap,
    body: String,
) -> ApiResult<DeliveryState> {
    authorize(&s, &headers)?;
    let b: DeliveredBody = parse_body(&body)?;
    Ok(Json(s.store().mark_delivered(&id, day, &b.story_id, b.at_ms)?))
}

async fn diary(State(s): State<AppState>, Path(id): Path<String>, headers: HeaderMap, body: String) -> ApiResult<DiaryEntry> {
    authorize(&s, &headers)?;
    let entry = DiaryEntry::from_json(&body)?;
    if entry.child_id != id {
        return Err(unprocessable(format!("diary entry is for {}, not {id}", entry.child_id)));
    }
    s.store().record_diary(&entry)?;
    Ok(Json(entry))
}

async fn post_log(State(s): State<AppState>, Path(id): Path<String>, headers: HeaderMap, body: String) -> Result<StatusCode, ApiError> {
    authorize(&s, &headers)?;
    let log: SessionLog = parse_body(&body)?;
    if log.child_id != id {
        return Err(unprocessable(format!("log is for {}, not {id}", log.child_id)));
    }
    s.store().append_log(&log)?;
    Ok(StatusCode::CREATED)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogQuery {
    day: Option<u32>,
    from: Option<u64>,
    to: Option<u64>,
}

async fn get_logs(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<LogQuery>,
    headers: HeaderMap,
) -> ApiResult<Vec<SessionLog>> {
    authorize(&s, &headers)?;
    Ok(Json(s.store().query_logs(&id, &LogFilter { day: q.day, from_ms: q.from, to_ms: q.to })))
}

async fn metrics(State(s): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<ChildMetrics> {
    authorize(&s, &headers)?;
    let (logs, curriculum) = {
        let store = s.store();
        (store.query_logs(&id, &LogFilter::default()), store.curriculum(&id)?.clone())
    };
    compute_metrics(&logs, &curriculum).map(Json).map_err(|e| match e {
        AnalyticsError::InsufficientData(_) => ApiError(StatusCode::NOT_FOUND, e.to_string()),
        other => unprocessable(other.to_string()),
    })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/children/{id}/curriculum", put(put_curriculum))
        .route("/v1/children/{id}/schedule:generate", post(generate))
        .route("/v1/children/{id}/days/{day}/stories", get(day_stories))
        .route("/v1/children/{id}/days/{day}/stories/{target}", post(review))
        .route("/v1/children/{id}/days/{day}/delivered", post(delivered))
        .route("/v1/children/{id}/diary", post(diary))
        .route("/v1/children/{id}/logs", get(get_logs).post(post_log))
        .route("/v1/children/{id}/metrics", get(metrics))
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(address: &str, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(address).await?;
    axum::serve(listener, router(state)).await
}
