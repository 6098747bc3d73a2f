#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use segedit_core::backends::{
    BackendError, BackendRegistry, BackendStack, Inpainter, InpainterInfo, ReferenceInpainter,
};
use segedit_core::pipeline::PipelineConfig;
use segedit_core::{ImageBuffer, Mask};
use segedit_service::api::{router, AppState};
use segedit_service::store::Store;
use serde::de::DeserializeOwned;
use serde_json::Value;
use tower::ServiceExt;

pub const BOUNDARY: &str = "segedit-test-boundary";

pub fn multipart(png: &[u8], config: Option<&str>) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(
        format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"in.png\"\r\nContent-Type: image/png\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(png);
    body.extend_from_slice(b"\r\n");
    if let Some(c) = config {
        body.extend_from_slice(
            format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"config\"\r\n\r\n{c}\r\n").as_bytes(),
        );
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json<T: DeserializeOwned>(&self) -> T {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.body));
        })
    }

    pub fn value(&self) -> Value {
        self.json()
    }
}

pub async fn send(app: &Router, method: &str, uri: &str, content_type: Option<&str>, body: Vec<u8>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        req = req.header("content-type", ct);
    }
    let resp = app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, "GET", uri, None, Vec::new()).await
}

pub async fn post_json(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, "POST", uri, Some("application/json"), body.to_string().into_bytes()).await
}

pub async fn create(app: &Router, image: &ImageBuffer, config: Option<&PipelineConfig>) -> Reply {
    let cfg = config.map(|c| serde_json::to_string(c).unwrap());
    send(
        app,
        "POST",
        "/v1/sessions",
        Some(&format!("multipart/form-data; boundary={BOUNDARY}")),
        multipart(&image.to_png().unwrap(), cfg.as_deref()),
    )
    .await
}

/// Creates a session and returns its id.
pub async fn create_id(app: &Router, image: &ImageBuffer, config: Option<&PipelineConfig>) -> String {
    let r = create(app, image, config).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.body));
    r.value()["session_id"].as_str().unwrap().to_string()
}

pub async fn step_image(app: &Router, id: &str, k: usize) -> ImageBuffer {
    let r = get(app, &format!("/v1/sessions/{id}/steps/{k}/image")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.content_type.as_deref(), Some("image/png"));
    ImageBuffer::from_png(&r.body).unwrap()
}

pub fn exact_config() -> PipelineConfig {
    PipelineConfig {
        dilation_radius: 0,
        feather_radius: 0,
        ..PipelineConfig::default()
    }
}

/// Reference inpainter that sleeps first, so edits overlap reliably.
pub struct SlowInpainter(pub ReferenceInpainter, pub Duration);

impl Inpainter for SlowInpainter {
    fn info(&self) -> &InpainterInfo {
        self.0.info()
    }

    fn inpaint(&self, image: &ImageBuffer, mask: &Mask, prompt: &str, seed: u64) -> Result<ImageBuffer, BackendError> {
        std::thread::sleep(self.1);
        self.0.inpaint(image, mask, prompt, seed)
    }
}

pub struct BrokenInpainter(pub InpainterInfo);

impl Inpainter for BrokenInpainter {
    fn info(&self) -> &InpainterInfo {
        &self.0
    }

    fn inpaint(&self, _: &ImageBuffer, _: &Mask, _: &str, _: u64) -> Result<ImageBuffer, BackendError> {
        Err(BackendError::Failed("out of memory".into()))
    }
}

pub fn test_registry(delay: Duration) -> BackendRegistry {
    let reference = BackendStack::reference();
    let mut reg = BackendRegistry::with_reference();
    reg.insert(BackendStack::new(
        "slow",
        reference.segmenter.clone(),
        reference.scorer.clone(),
        Arc::new(SlowInpainter(ReferenceInpainter::new(), delay)),
    ))
    .unwrap();
    reg.insert(BackendStack::new(
        "broken",
        reference.segmenter.clone(),
        reference.scorer.clone(),
        Arc::new(BrokenInpainter(reference.inpainter.info().clone())),
    ))
    .unwrap();
    reg
}

pub fn app(store: &std::path::Path) -> Router {
    router(AppState::new(test_registry(Duration::from_millis(600)), Store::new(store)))
}
