//! The `/v1` HTTP API over edit sessions.
//!
//! Reads work on an immutable snapshot of the session, so they never wait
//! for a running edit. Mutations (edit, undo) claim a per-session busy flag
//! and fail with 409 while another mutation holds it.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use segedit_core::backends::{BackendRegistry, BackendStack, StackDescription};
use segedit_core::pipeline::{
    rank_preview, EditInstruction, EditSession, EditStep, PipelineConfig, PipelineError, Stage, StepStatus,
};
use segedit_core::ranking::{Outcome, RankingError};
use segedit_core::{BBox, ImageBuffer, Mask};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::store::{Store, StoreError, StoredSession};

/// Largest accepted upload side, in pixels.
pub const MAX_UPLOAD_SIDE: u32 = 4096;
const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorResponse,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorResponse {
                error: code.into(),
                message: message.into(),
                stage: None,
            },
        }
    }

    fn staged(mut self, stage: Option<Stage>) -> Self {
        self.body.stage = stage;
        self
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::warn!(status = %self.status, error = %self.body.message, "request failed");
        }
        (self.status, Json(self.body)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let stage = e.stage();
        let msg = e.to_string();
        let err = match &e {
            PipelineError::InvalidConfig(_)
            | PipelineError::InvalidInstruction(_)
            | PipelineError::IndexOutOfRange { .. }
            | PipelineError::EmptyInstructions => Self::bad_request(msg),
            PipelineError::NoMatch { .. } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "no_match", msg),
            PipelineError::NoSegments => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "no_segments", msg),
            PipelineError::Backend { .. } => Self::new(StatusCode::BAD_GATEWAY, "backend_failed", msg),
            PipelineError::Ranking(r) => match r {
                RankingError::EmptyPrompt
                | RankingError::BadTemperature(_)
                | RankingError::BadThreshold(_)
                | RankingError::BadPadding(_) => Self::bad_request(msg),
                RankingError::UnknownSegment(_) => {
                    Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_segment", msg)
                }
                RankingError::EmptySegments => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "no_segments", msg),
                _ => Self::new(StatusCode::BAD_GATEWAY, "backend_failed", msg),
            },
            PipelineError::Composite(_)
            | PipelineError::Cancelled
            | PipelineError::Inconsistent(_) => Self::internal(msg),
        };
        err.staged(stage)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) | StoreError::BadId(_) => Self::not_found(e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    /// 1-based.
    pub step: usize,
    pub source_prompt: String,
    pub target_prompt: String,
    pub status: StepStatus,
    pub seed: u64,
    pub outcome: Option<Outcome>,
    pub segment_id: Option<String>,
    pub norm_score: Option<f64>,
    pub dilated_mask: Mask,
    pub image_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub width: u32,
    pub height: u32,
    pub config: PipelineConfig,
    pub step_count: usize,
    pub base_image_url: String,
    pub current_image_url: String,
    pub steps: Vec<StepSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSegmentView {
    pub segment_id: String,
    pub rank: usize,
    pub raw_score: f64,
    pub norm_score: f64,
    pub backend_score: f64,
    pub area: usize,
    pub bbox: BBox,
    pub mask: Mask,
}

/// Ranking of the current image's segments against a source prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPreview {
    pub session_id: String,
    /// Number of steps applied to the ranked image.
    pub step: usize,
    pub source_prompt: String,
    pub width: u32,
    pub height: u32,
    pub threshold: f64,
    pub temperature: f64,
    pub outcome: Outcome,
    /// In rank order.
    pub segments: Vec<RankedSegmentView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankRequest {
    pub source_prompt: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub source_prompt: String,
    pub target_prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_segment_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UndoRequest {
    pub to_step: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackList {
    pub stacks: Vec<StackDescription>,
}

pub fn step_image_url(session_id: &str, k: usize) -> String {
    format!("/v1/sessions/{session_id}/steps/{k}/image")
}

fn step_summary(session_id: &str, k: usize, step: &EditStep) -> StepSummary {
    let chosen = step.selection.as_ref().and_then(|s| s.chosen());
    StepSummary {
        step: k,
        source_prompt: step.instruction.source_prompt().into(),
        target_prompt: step.instruction.target_prompt().into(),
        status: step.status.clone(),
        seed: step.seed,
        outcome: step.selection.as_ref().map(|s| s.outcome.clone()),
        segment_id: chosen.map(|c| c.segment.id().to_string()),
        norm_score: chosen.map(|c| c.norm_score),
        dilated_mask: step.dilated_mask.clone(),
        image_url: step_image_url(session_id, k),
    }
}

pub fn session_summary(stored: &StoredSession) -> SessionSummary {
    let s = &stored.session;
    SessionSummary {
        session_id: s.session_id.clone(),
        created_at: stored.created_at,
        width: s.base_image.width(),
        height: s.base_image.height(),
        config: s.config.clone(),
        step_count: s.steps.len(),
        base_image_url: step_image_url(&s.session_id, 0),
        current_image_url: step_image_url(&s.session_id, s.steps.len()),
        steps: s
            .steps
            .iter()
            .enumerate()
            .map(|(i, step)| step_summary(&s.session_id, i + 1, step))
            .collect(),
    }
}

struct Slot {
    busy: AtomicBool,
    current: RwLock<Arc<StoredSession>>,
}

impl Slot {
    fn new(stored: StoredSession) -> Arc<Self> {
        Arc::new(Self {
            busy: AtomicBool::new(false),
            current: RwLock::new(Arc::new(stored)),
        })
    }

    fn snapshot(&self) -> Arc<StoredSession> {
        self.current.read().expect("slot lock poisoned").clone()
    }

    fn replace(&self, stored: StoredSession) {
        *self.current.write().expect("slot lock poisoned") = Arc::new(stored);
    }

    fn claim(self: &Arc<Self>) -> Result<BusyGuard, ApiError> {
        self.busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map_err(|_| {
                ApiError::new(
                    StatusCode::CONFLICT,
                    "session_busy",
                    "another edit or undo is in progress on this session",
                )
            })?;
        Ok(BusyGuard(self.clone()))
    }
}

struct BusyGuard(Arc<Slot>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

struct Inner {
    registry: BackendRegistry,
    store: Store,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
}

/// Shared state behind the router.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(registry: BackendRegistry, store: Store) -> Self {
        Self(Arc::new(Inner {
            registry,
            store,
            sessions: RwLock::new(HashMap::new()),
        }))
    }

    pub fn store(&self) -> &Store {
        &self.0.store
    }

    fn stack(&self, stack_id: &str) -> Result<BackendStack, ApiError> {
        self.0
            .registry
            .get(stack_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown stack {stack_id:?}")))
    }

    /// The live slot for `id`, loading it from the store on first use.
    async fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        if let Some(slot) = self.0.sessions.read().expect("session map poisoned").get(id) {
            return Ok(slot.clone());
        }
        let store = self.0.store.clone();
        let owned = id.to_string();
        let stored = blocking(move || store.load(&owned)).await??;
        let mut map = self.0.sessions.write().expect("session map poisoned");
        Ok(map.entry(id.to_string()).or_insert_with(|| Slot::new(stored)).clone())
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/stacks", get(list_stacks))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/rank", post(rank))
        .route("/v1/sessions/{id}/edit", post(edit))
        .route("/v1/sessions/{id}/undo", post(undo))
        .route("/v1/sessions/{id}/steps/{k}/image", get(step_image))
        .fallback(|| async { ApiError::not_found("no such route") })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

async fn list_stacks(State(state): State<AppState>) -> Json<StackList> {
    Json(StackList {
        stacks: state.0.registry.describe(),
    })
}

async fn create_session(
    State(state): State<AppState>,
    mut multipart: Multipart,
) -> Result<(StatusCode, Json<SessionSummary>), ApiError> {
    let mut png = None;
    let mut config_json = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("multipart: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let data = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(format!("multipart field {name}: {e}")))?;
        match name.as_str() {
            "image" => png = Some(data),
            "config" => config_json = Some(data),
            other => return Err(ApiError::bad_request(format!("unexpected multipart field {other:?}"))),
        }
    }
    let png = png.ok_or_else(|| ApiError::bad_request("missing multipart field \"image\""))?;
    let (w, h) = ImageBuffer::png_dimensions(&png).map_err(|e| ApiError::bad_request(format!("image: {e}")))?;
    if w > MAX_UPLOAD_SIDE || h > MAX_UPLOAD_SIDE {
        return Err(ApiError::bad_request(format!(
            "image is {w}x{h}; the limit is {MAX_UPLOAD_SIDE}x{MAX_UPLOAD_SIDE}"
        )));
    }
    let config = match config_json {
        Some(c) => parse_body::<PipelineConfig>(&c)?,
        None => PipelineConfig::default_for_image(w, h),
    };
    config.validate()?;
    state.stack(&config.stack_id)?;

    let store = state.0.store.clone();
    let stored = blocking(move || -> Result<StoredSession, ApiError> {
        let image = ImageBuffer::from_png(&png).map_err(|e| ApiError::bad_request(format!("image: {e}")))?;
        let id = format!("s-{}", uuid::Uuid::new_v4().simple());
        let stored = StoredSession::new(EditSession::new(id, image, config)?);
        store.save(&stored)?;
        Ok(stored)
    })
    .await??;
    tracing::info!(session = %stored.session.session_id, width = w, height = h, "session created");
    let summary = session_summary(&stored);
    state
        .0
        .sessions
        .write()
        .expect("session map poisoned")
        .insert(stored.session.session_id.clone(), Slot::new(stored));
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    let snap = state.slot(&id).await?.snapshot();
    Ok(Json(session_summary(&snap)))
}

async fn rank(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<RankPreview>, ApiError> {
    let req: RankRequest = parse_body(&body)?;
    let snap = state.slot(&id).await?.snapshot();
    let stack = state.stack(&snap.session.config.stack_id)?;
    let prompt = req.source_prompt.clone();
    let worker = snap.clone();
    let selection = blocking(move || {
        let s = &worker.session;
        rank_preview(s.current_image(), &prompt, &stack, &s.config)
    })
    .await??;
    let s = &snap.session;
    Ok(Json(RankPreview {
        session_id: s.session_id.clone(),
        step: s.steps.len(),
        source_prompt: req.source_prompt,
        width: s.base_image.width(),
        height: s.base_image.height(),
        threshold: selection.threshold_used,
        temperature: s.config.temperature,
        outcome: selection.outcome,
        segments: selection
            .all_ranked
            .into_iter()
            .map(|r| RankedSegmentView {
                segment_id: r.segment.id().to_string(),
                rank: r.rank,
                raw_score: r.raw_score,
                norm_score: r.norm_score,
                backend_score: r.segment.backend_score(),
                area: r.segment.area(),
                bbox: r.segment.bbox(),
                mask: r.segment.mask().clone(),
            })
            .collect(),
    }))
}

async fn edit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<StepSummary>, ApiError> {
    let req: EditRequest = parse_body(&body)?;
    let instruction = EditInstruction::new(&req.source_prompt, &req.target_prompt)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let slot = state.slot(&id).await?;
    let guard = slot.claim()?;
    let mut next = (*slot.snapshot()).clone();
    let stack = state.stack(&next.session.config.stack_id)?;
    let store = state.0.store.clone();
    let next = blocking(move || -> Result<StoredSession, ApiError> {
        next.session
            .apply(&instruction, &stack, req.override_segment_id.as_deref(), None)?;
        store.save_from(&next, next.session.steps.len())?;
        Ok(next)
    })
    .await??;
    let k = next.session.steps.len();
    let summary = step_summary(&id, k, &next.session.steps[k - 1]);
    slot.replace(next);
    drop(guard);
    tracing::info!(session = %id, step = k, status = ?summary.status, "edit applied");
    Ok(Json(summary))
}

async fn undo(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionSummary>, ApiError> {
    let req: UndoRequest = parse_body(&body)?;
    let slot = state.slot(&id).await?;
    let guard = slot.claim()?;
    let mut next = (*slot.snapshot()).clone();
    next.session.undo(req.to_step)?;
    let store = state.0.store.clone();
    let next = blocking(move || -> Result<StoredSession, ApiError> {
        store.save_from(&next, next.session.steps.len() + 1)?;
        Ok(next)
    })
    .await??;
    let summary = session_summary(&next);
    slot.replace(next);
    drop(guard);
    Ok(Json(summary))
}

async fn step_image(
    State(state): State<AppState>,
    Path((id, k)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let snap = state.slot(&id).await?.snapshot();
    let k: usize = k
        .parse()
        .map_err(|_| ApiError::not_found(format!("no step {k:?}")))?;
    if snap.session.image_at(k).is_none() {
        return Err(ApiError::not_found(format!(
            "session has {} steps, no step {k}",
            snap.session.steps.len()
        )));
    }
    let png = blocking(move || snap.session.image_at(k).expect("checked").to_png())
        .await?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
