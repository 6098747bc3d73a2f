//! Adapters that forward role calls to model servers over HTTP/JSON.
//!
//! Construction performs a health probe and fails unless the server reports
//! the expected role. Every response is checked against the role contract
//! before being handed back; a server that misbehaves produces a
//! [`BackendError::ProtocolViolation`], never a bad value.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    decode_png_b64, encode_png_b64, ErrorBody, HealthResponse, InpaintRequest, InpaintResponse,
    ScoreRequest, ScoreResponse, SegmentRequest, SegmentResponse,
};
use super::{
    check_inpaint, check_scores, check_segments, BackendError, Inpainter, InpainterInfo, Role,
    Scorer, ScorerInfo, Segmenter, SegmenterInfo,
};
use crate::image::ImageBuffer;
use crate::mask::Mask;
use crate::segment::Segment;

const MAX_RESPONSE_BYTES: u64 = 512 * 1024 * 1024;

#[derive(Clone)]
struct Client {
    endpoint: String,
    role: Role,
    agent: ureq::Agent,
}

impl Client {
    fn new(endpoint: &str, role: Role, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            role,
            agent,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.endpoint, path)
    }

    fn violation(&self, message: impl Into<String>) -> BackendError {
        BackendError::ProtocolViolation {
            endpoint: self.endpoint.clone(),
            role: self.role,
            message: message.into(),
        }
    }

    fn transport(&self, err: ureq::Error) -> BackendError {
        match err {
            ureq::Error::Timeout(_) => BackendError::Timeout {
                endpoint: self.endpoint.clone(),
                role: self.role,
            },
            ureq::Error::Io(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
                ) =>
            {
                BackendError::Timeout {
                    endpoint: self.endpoint.clone(),
                    role: self.role,
                }
            }
            ureq::Error::Json(e) => self.violation(format!("malformed response body: {e}")),
            ureq::Error::BodyExceedsLimit(n) => {
                self.violation(format!("response body exceeds {n} bytes"))
            }
            other => BackendError::Connection {
                endpoint: self.endpoint.clone(),
                role: self.role,
                message: other.to_string(),
            },
        }
    }

    fn read<T: DeserializeOwned>(
        &self,
        result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<T, BackendError> {
        let mut resp = result.map_err(|e| self.transport(e))?;
        let status = resp.status();
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_vec()
            .map_err(|e| self.transport(e))?;
        if !status.is_success() {
            let message = serde_json::from_slice::<ErrorBody>(&body)
                .map(|b| b.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
            return Err(BackendError::Server {
                endpoint: self.endpoint.clone(),
                role: self.role,
                status: status.as_u16(),
                message,
            });
        }
        serde_json::from_slice(&body).map_err(|e| self.violation(format!("malformed response body: {e}")))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, BackendError> {
        self.read(self.agent.get(&self.url(path)).call())
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, BackendError> {
        self.read(self.agent.post(&self.url(path)).send_json(body))
    }

    fn probe(&self) -> Result<HealthResponse, BackendError> {
        let health: HealthResponse = self.get("/health")?;
        match health.role {
            Some(r) if r == self.role => Ok(health),
            Some(r) => Err(self.violation(format!("server reports role {r}, expected {}", self.role))),
            None => Err(self.violation("health response has no role")),
        }
    }

    fn encode(&self, image: &ImageBuffer) -> Result<String, BackendError> {
        encode_png_b64(image).map_err(|e| BackendError::InvalidInput(e.to_string()))
    }
}

pub struct RemoteSegmenter {
    client: Client,
    info: SegmenterInfo,
    params: serde_json::Value,
}

impl RemoteSegmenter {
    /// `params` is forwarded verbatim with every `/segment` call.
    pub fn connect(endpoint: &str, timeout: Duration, params: serde_json::Value) -> Result<Self, BackendError> {
        let client = Client::new(endpoint, Role::Segmenter, timeout);
        let health = client.probe()?;
        Ok(Self {
            info: health.segmenter_info(),
            client,
            params,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.client.endpoint
    }
}

impl Segmenter for RemoteSegmenter {
    fn info(&self) -> &SegmenterInfo {
        &self.info
    }

    fn segment(&self, image: &ImageBuffer) -> Result<Vec<Segment>, BackendError> {
        self.segment_with_params(image, &self.params)
    }

    fn segment_with_params(
        &self,
        image: &ImageBuffer,
        params: &serde_json::Value,
    ) -> Result<Vec<Segment>, BackendError> {
        let req = SegmentRequest {
            image: self.client.encode(image)?,
            params: params.clone(),
        };
        let resp: SegmentResponse = self.client.post("/segment", &req)?;
        check_segments(image, &resp.segments).map_err(|m| self.client.violation(m))?;
        Ok(resp.segments)
    }
}

pub struct RemoteScorer {
    client: Client,
    info: ScorerInfo,
}

impl RemoteScorer {
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self, BackendError> {
        let client = Client::new(endpoint, Role::Scorer, timeout);
        let health = client.probe()?;
        Ok(Self {
            info: health.scorer_info(),
            client,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.client.endpoint
    }
}

impl Scorer for RemoteScorer {
    fn info(&self) -> &ScorerInfo {
        &self.info
    }

    fn score(&self, crops: &[ImageBuffer], prompt: &str) -> Result<Vec<f64>, BackendError> {
        if crops.is_empty() {
            return Err(BackendError::InvalidInput("no crops to score".into()));
        }
        let req = ScoreRequest {
            crops: crops
                .iter()
                .map(|c| self.client.encode(c))
                .collect::<Result<_, _>>()?,
            prompt: prompt.to_string(),
        };
        let resp: ScoreResponse = self.client.post("/score", &req)?;
        check_scores(crops.len(), &resp.scores).map_err(|m| self.client.violation(m))?;
        Ok(resp.scores)
    }
}

pub struct RemoteInpainter {
    client: Client,
    info: InpainterInfo,
}

impl RemoteInpainter {
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self, BackendError> {
        let client = Client::new(endpoint, Role::Inpainter, timeout);
        let health = client.probe()?;
        Ok(Self {
            info: health.inpainter_info(),
            client,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.client.endpoint
    }
}

impl Inpainter for RemoteInpainter {
    fn info(&self) -> &InpainterInfo {
        &self.info
    }

    fn inpaint(
        &self,
        image: &ImageBuffer,
        mask: &Mask,
        prompt: &str,
        seed: u64,
    ) -> Result<ImageBuffer, BackendError> {
        if mask.dimensions() != image.dimensions() {
            return Err(BackendError::InvalidInput(format!(
                "mask {:?} does not match image {:?}",
                mask.dimensions(),
                image.dimensions()
            )));
        }
        let req = InpaintRequest {
            image: self.client.encode(image)?,
            mask: mask.clone(),
            prompt: prompt.to_string(),
            seed,
        };
        let resp: InpaintResponse = self.client.post("/inpaint", &req)?;
        let out = decode_png_b64(&resp.image)
            .map_err(|e| self.client.violation(format!("undecodable image: {e}")))?;
        check_inpaint(image, &out).map_err(|m| self.client.violation(m))?;
        Ok(out)
    }
}

/// A connected remote adapter for whichever role was requested.
pub enum RemoteContract {
    Segmenter(RemoteSegmenter),
    Scorer(RemoteScorer),
    Inpainter(RemoteInpainter),
}

impl RemoteContract {
    pub fn role(&self) -> Role {
        match self {
            RemoteContract::Segmenter(_) => Role::Segmenter,
            RemoteContract::Scorer(_) => Role::Scorer,
            RemoteContract::Inpainter(_) => Role::Inpainter,
        }
    }
}

/// Connects to `endpoint` and checks that it serves `role`.
pub fn remote_adapter(endpoint: &str, role: Role, timeout: Duration) -> Result<RemoteContract, BackendError> {
    Ok(match role {
        Role::Segmenter => {
            RemoteContract::Segmenter(RemoteSegmenter::connect(endpoint, timeout, serde_json::Value::Null)?)
        }
        Role::Scorer => RemoteContract::Scorer(RemoteScorer::connect(endpoint, timeout)?),
        Role::Inpainter => RemoteContract::Inpainter(RemoteInpainter::connect(endpoint, timeout)?),
    })
}
