//! Serves one backend role over the model-server wire protocol, so any
//! in-process implementation can stand behind a remote adapter.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use segedit_core::backends::wire::{
    decode_png_b64, encode_png_b64, ErrorBody, HealthResponse, InpaintRequest, InpaintResponse, ScoreRequest,
    ScoreResponse, SegmentRequest, SegmentResponse,
};
use segedit_core::backends::{
    BackendError, Inpainter, ReferenceInpainter, ReferenceScorer, ReferenceSegmenter, Role, Scorer, Segmenter,
    SegmenterParams,
};
use segedit_core::ImageBuffer;
use serde::de::DeserializeOwned;

const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

#[derive(Clone)]
pub enum ServedBackend {
    Segmenter(Arc<dyn Segmenter>),
    Scorer(Arc<dyn Scorer>),
    Inpainter(Arc<dyn Inpainter>),
}

impl ServedBackend {
    pub fn reference(role: Role) -> Self {
        match role {
            Role::Segmenter => Self::Segmenter(Arc::new(ReferenceSegmenter::new(SegmenterParams::default()))),
            Role::Scorer => Self::Scorer(Arc::new(ReferenceScorer::new())),
            Role::Inpainter => Self::Inpainter(Arc::new(ReferenceInpainter::new())),
        }
    }

    pub fn role(&self) -> Role {
        match self {
            Self::Segmenter(_) => Role::Segmenter,
            Self::Scorer(_) => Role::Scorer,
            Self::Inpainter(_) => Role::Inpainter,
        }
    }

    pub fn health(&self) -> HealthResponse {
        match self {
            Self::Segmenter(b) => HealthResponse::for_segmenter(b.info()),
            Self::Scorer(b) => HealthResponse::for_scorer(b.info()),
            Self::Inpainter(b) => HealthResponse::for_inpainter(b.info()),
        }
    }
}

struct Failure(StatusCode, String);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        let status = match e {
            BackendError::InvalidInput(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Failure(status, e.to_string())
    }
}

fn bad(message: impl Into<String>) -> Failure {
    Failure(StatusCode::BAD_REQUEST, message.into())
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, Failure> {
    serde_json::from_slice(body).map_err(|e| bad(format!("invalid request body: {e}")))
}

fn image(b64: &str) -> Result<ImageBuffer, Failure> {
    decode_png_b64(b64).map_err(|e| bad(format!("image: {e}")))
}

async fn run<T: Send + 'static>(f: impl FnOnce() -> Result<T, Failure> + Send + 'static) -> Result<T, Failure> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Failure(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))?
}

pub fn backend_router(backend: ServedBackend) -> Router {
    let routes = Router::new().route("/health", get(health));
    let routes = match backend.role() {
        Role::Segmenter => routes.route("/segment", post(segment)),
        Role::Scorer => routes.route("/score", post(score)),
        Role::Inpainter => routes.route("/inpaint", post(inpaint)),
    };
    routes
        .fallback(|| async { Failure(StatusCode::NOT_FOUND, "no such route".into()) })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(backend)
}

async fn health(State(b): State<ServedBackend>) -> Json<HealthResponse> {
    Json(b.health())
}

async fn segment(State(b): State<ServedBackend>, body: Bytes) -> Result<Json<SegmentResponse>, Failure> {
    let ServedBackend::Segmenter(seg) = b else {
        unreachable!("route registered for segmenters only")
    };
    let req: SegmentRequest = parse(&body)?;
    let segments = run(move || {
        let img = image(&req.image)?;
        Ok(seg.segment_with_params(&img, &req.params)?)
    })
    .await?;
    Ok(Json(SegmentResponse { segments }))
}

async fn score(State(b): State<ServedBackend>, body: Bytes) -> Result<Json<ScoreResponse>, Failure> {
    let ServedBackend::Scorer(scorer) = b else {
        unreachable!("route registered for scorers only")
    };
    let req: ScoreRequest = parse(&body)?;
    let scores = run(move || {
        let crops = req.crops.iter().map(|c| image(c)).collect::<Result<Vec<_>, _>>()?;
        Ok(scorer.score(&crops, &req.prompt)?)
    })
    .await?;
    Ok(Json(ScoreResponse { scores }))
}

async fn inpaint(State(b): State<ServedBackend>, body: Bytes) -> Result<Json<InpaintResponse>, Failure> {
    let ServedBackend::Inpainter(inp) = b else {
        unreachable!("route registered for inpainters only")
    };
    let req: InpaintRequest = parse(&body)?;
    let image = run(move || {
        let img = image(&req.image)?;
        let out = inp.inpaint(&img, &req.mask, &req.prompt, req.seed)?;
        encode_png_b64(&out).map_err(|e| Failure(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
    })
    .await?;
    Ok(Json(InpaintResponse { image }))
}
