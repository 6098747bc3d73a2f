//! JSON bodies of the model-server protocol.
//!
//! ```text
//! GET  /health   -> {"role", "name", ...capabilities}
//! POST /segment  {image, params}            -> {segments: [Segment]}
//! POST /score    {crops: [png], prompt}     -> {scores: [float]}
//! POST /inpaint  {image, mask, prompt, seed} -> {image}
//! ```
//!
//! Images travel as base64-encoded PNG.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{InpainterInfo, Role, ScoreRange, ScorerInfo, SegmenterInfo};
use crate::error::CoreError;
use crate::image::ImageBuffer;
use crate::mask::Mask;
use crate::segment::Segment;

/// Health probe reply. Capability fields are optional; adapters fall back
/// to conservative defaults when a server omits them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub role: Option<Role>,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_image_side: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supports_overlapping_masks: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_range: Option<ScoreRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub languages: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_resolution: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deterministic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepts_seed: Option<bool>,
}

impl HealthResponse {
    pub fn for_segmenter(info: &SegmenterInfo) -> Self {
        Self {
            role: Some(Role::Segmenter),
            name: info.name.clone(),
            max_image_side: Some(info.max_image_side),
            supports_overlapping_masks: Some(info.supports_overlapping_masks),
            ..Default::default()
        }
    }

    pub fn for_scorer(info: &ScorerInfo) -> Self {
        Self {
            role: Some(Role::Scorer),
            name: info.name.clone(),
            max_image_side: info.max_image_side,
            score_range: Some(info.score_range),
            languages: Some(info.languages.clone()),
            ..Default::default()
        }
    }

    pub fn for_inpainter(info: &InpainterInfo) -> Self {
        Self {
            role: Some(Role::Inpainter),
            name: info.name.clone(),
            native_resolution: Some(info.native_resolution),
            deterministic: Some(info.deterministic),
            accepts_seed: Some(info.accepts_seed),
            ..Default::default()
        }
    }

    pub fn segmenter_info(&self) -> SegmenterInfo {
        SegmenterInfo {
            name: self.name.clone(),
            max_image_side: self.max_image_side.unwrap_or(1024),
            supports_overlapping_masks: self.supports_overlapping_masks.unwrap_or(true),
        }
    }

    pub fn scorer_info(&self) -> ScorerInfo {
        ScorerInfo {
            name: self.name.clone(),
            score_range: self.score_range.unwrap_or(ScoreRange::RawLogit),
            languages: self.languages.clone().unwrap_or_default(),
            max_image_side: self.max_image_side,
        }
    }

    pub fn inpainter_info(&self) -> InpainterInfo {
        InpainterInfo {
            name: self.name.clone(),
            native_resolution: self.native_resolution.unwrap_or(512),
            deterministic: self.deterministic.unwrap_or(false),
            accepts_seed: self.accepts_seed.unwrap_or(true),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub crops: Vec<String>,
    pub prompt: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InpaintRequest {
    pub image: String,
    pub mask: Mask,
    pub prompt: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InpaintResponse {
    pub image: String,
}

/// Error body returned by model servers on non-2xx statuses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub fn encode_png_b64(image: &ImageBuffer) -> Result<String, CoreError> {
    Ok(STANDARD.encode(image.to_png()?))
}

pub fn decode_png_b64(data: &str) -> Result<ImageBuffer, CoreError> {
    let bytes = STANDARD
        .decode(data)
        .map_err(|e| CoreError::Codec(format!("base64: {e}")))?;
    ImageBuffer::from_png(&bytes)
}
