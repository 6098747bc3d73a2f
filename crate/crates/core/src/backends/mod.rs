//! Model-role contracts (segmenter, scorer, inpainter) and their
//! implementations.
//!
//! A [`BackendStack`] bundles one implementation of each role. The
//! [`reference`] implementations are deterministic and GPU-free; the
//! [`remote`] adapters forward to model servers speaking the JSON protocol
//! in [`wire`].

pub mod reference;
pub mod registry;
pub mod remote;
pub mod wire;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageBuffer;
use crate::mask::Mask;
use crate::segment::Segment;

pub use reference::{ReferenceInpainter, ReferenceScorer, ReferenceSegmenter, SegmenterParams};
pub use registry::{BackendRegistry, RegistryError, StackConfig};
pub use remote::{remote_adapter, RemoteContract, RemoteInpainter, RemoteScorer, RemoteSegmenter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Segmenter,
    Scorer,
    Inpainter,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Segmenter => "segmenter",
            Role::Scorer => "scorer",
            Role::Inpainter => "inpainter",
        })
    }
}

#[derive(Debug, Clone, Error)]
pub enum BackendError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{role} at {endpoint}: connection failed: {message}")]
    Connection {
        endpoint: String,
        role: Role,
        message: String,
    },
    #[error("{role} at {endpoint}: timed out")]
    Timeout { endpoint: String, role: Role },
    #[error("{role} at {endpoint}: protocol violation: {message}")]
    ProtocolViolation {
        endpoint: String,
        role: Role,
        message: String,
    },
    #[error("{role} at {endpoint}: server returned status {status}: {message}")]
    Server {
        endpoint: String,
        role: Role,
        status: u16,
        message: String,
    },
    #[error("backend failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterInfo {
    pub name: String,
    pub max_image_side: u32,
    pub supports_overlapping_masks: bool,
}

/// Whether a scorer emits unbounded logits or probabilities in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreRange {
    RawLogit,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerInfo {
    pub name: String,
    pub score_range: ScoreRange,
    /// BCP-47 tags.
    pub languages: Vec<String>,
    /// Crops with a longer side are downscaled before scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_image_side: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpainterInfo {
    pub name: String,
    pub native_resolution: u32,
    pub deterministic: bool,
    pub accepts_seed: bool,
}

/// Proposes segments for an image. Every returned segment's mask has the
/// image's dimensions.
pub trait Segmenter: Send + Sync {
    fn info(&self) -> &SegmenterInfo;

    fn segment(&self, image: &ImageBuffer) -> Result<Vec<Segment>, BackendError>;

    /// Segments with per-request parameters from the wire protocol. Backends
    /// without tunable parameters ignore them.
    fn segment_with_params(
        &self,
        image: &ImageBuffer,
        _params: &serde_json::Value,
    ) -> Result<Vec<Segment>, BackendError> {
        self.segment(image)
    }
}

/// Scores each crop against a prompt: one finite value per crop,
/// deterministic for identical inputs.
pub trait Scorer: Send + Sync {
    fn info(&self) -> &ScorerInfo;

    fn score(&self, crops: &[ImageBuffer], prompt: &str) -> Result<Vec<f64>, BackendError>;
}

/// Generates new content for the masked region. The output has the input's
/// dimensions.
pub trait Inpainter: Send + Sync {
    fn info(&self) -> &InpainterInfo;

    fn inpaint(
        &self,
        image: &ImageBuffer,
        mask: &Mask,
        prompt: &str,
        seed: u64,
    ) -> Result<ImageBuffer, BackendError>;
}

/// One interchangeable (segmenter, scorer, inpainter) triple.
#[derive(Clone)]
pub struct BackendStack {
    pub stack_id: String,
    pub segmenter: Arc<dyn Segmenter>,
    pub scorer: Arc<dyn Scorer>,
    pub inpainter: Arc<dyn Inpainter>,
}

impl fmt::Debug for BackendStack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendStack")
            .field("stack_id", &self.stack_id)
            .field("segmenter", &self.segmenter.info().name)
            .field("scorer", &self.scorer.info().name)
            .field("inpainter", &self.inpainter.info().name)
            .finish()
    }
}

impl BackendStack {
    pub fn new(
        stack_id: impl Into<String>,
        segmenter: Arc<dyn Segmenter>,
        scorer: Arc<dyn Scorer>,
        inpainter: Arc<dyn Inpainter>,
    ) -> Self {
        Self {
            stack_id: stack_id.into(),
            segmenter,
            scorer,
            inpainter,
        }
    }

    /// The all-reference stack with default segmenter parameters.
    pub fn reference() -> Self {
        Self::reference_with(SegmenterParams::default())
    }

    pub fn reference_with(params: SegmenterParams) -> Self {
        Self::new(
            "reference",
            Arc::new(ReferenceSegmenter::new(params)),
            Arc::new(ReferenceScorer::new()),
            Arc::new(ReferenceInpainter::new()),
        )
    }

    pub fn describe(&self) -> StackDescription {
        StackDescription {
            stack_id: self.stack_id.clone(),
            segmenter: self.segmenter.info().clone(),
            scorer: self.scorer.info().clone(),
            inpainter: self.inpainter.info().clone(),
        }
    }
}

/// Serializable summary of a stack's capabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackDescription {
    pub stack_id: String,
    pub segmenter: SegmenterInfo,
    pub scorer: ScorerInfo,
    pub inpainter: InpainterInfo,
}

/// Checks a segmenter's output against the role contract.
pub fn check_segments(image: &ImageBuffer, segments: &[Segment]) -> Result<(), String> {
    let mut seen = std::collections::HashSet::new();
    for s in segments {
        if s.mask().dimensions() != image.dimensions() {
            return Err(format!(
                "segment {} mask is {:?}, image is {:?}",
                s.id(),
                s.mask().dimensions(),
                image.dimensions()
            ));
        }
        if !seen.insert(s.id()) {
            return Err(format!("duplicate segment_id {}", s.id()));
        }
    }
    Ok(())
}

pub fn check_scores(n_crops: usize, scores: &[f64]) -> Result<(), String> {
    if scores.len() != n_crops {
        return Err(format!("{} scores for {} crops", scores.len(), n_crops));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(format!("non-finite score {bad}"));
    }
    Ok(())
}

pub fn check_inpaint(input: &ImageBuffer, output: &ImageBuffer) -> Result<(), String> {
    if input.dimensions() != output.dimensions() {
        return Err(format!(
            "inpaint returned {:?} for a {:?} input",
            output.dimensions(),
            input.dimensions()
        ));
    }
    Ok(())
}
