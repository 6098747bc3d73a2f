//! Edit orchestration: single edits, instruction scripts and sessions.

mod edit;
pub mod instructions;
mod session;

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::BackendError;
use crate::error::CoreError;
use crate::ranking::{CropSpec, RankingError, Selection};

pub use edit::{edit_once, edit_once_with, rank_preview, EditOptions, EditStep, StepFailure, StepStatus, ERASE_FILL};
pub use instructions::{parse_instructions, render_script, EditInstruction, ParseError, ParseErrorKind, Position};
pub use session::{run_session, run_session_with, undo, EditSession};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoMatchPolicy {
    /// Record the step as skipped and pass the image through.
    #[default]
    Skip,
    Error,
}

/// Knobs for one edit. Radii are in pixels of the image being edited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stack_id: String,
    pub crop_spec: CropSpec,
    pub temperature: f64,
    pub threshold: f64,
    pub dilation_radius: u32,
    pub feather_radius: u32,
    pub seed: u64,
    pub on_no_match: NoMatchPolicy,
}

/// Default radii at the 512 px reference size.
pub const DEFAULT_DILATION_RADIUS: u32 = 3;
pub const DEFAULT_FEATHER_RADIUS: u32 = 2;
const REFERENCE_SIDE: f64 = 512.0;

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stack_id: "reference".into(),
            crop_spec: CropSpec::default(),
            temperature: 1.0,
            threshold: 0.0,
            dilation_radius: DEFAULT_DILATION_RADIUS,
            feather_radius: DEFAULT_FEATHER_RADIUS,
            seed: 0,
            on_no_match: NoMatchPolicy::Skip,
        }
    }
}

impl PipelineConfig {
    /// Defaults with the dilation and feather radii scaled to the image's
    /// longer side.
    pub fn default_for_image(width: u32, height: u32) -> Self {
        let scale = width.max(height) as f64 / REFERENCE_SIDE;
        Self {
            dilation_radius: (DEFAULT_DILATION_RADIUS as f64 * scale).round() as u32,
            feather_radius: (DEFAULT_FEATHER_RADIUS as f64 * scale).round() as u32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.stack_id.is_empty() {
            return bad("stack_id is empty".into());
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad(format!("temperature must be finite and > 0, got {}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold must be in [0, 1], got {}", self.threshold));
        }
        Ok(())
    }
}

/// The pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Segment,
    Rank,
    Inpaint,
    Composite,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Segment => "segment",
            Stage::Rank => "rank",
            Stage::Inpaint => "inpaint",
            Stage::Composite => "composite",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid instruction: {0}")]
    InvalidInstruction(String),
    #[error("[{stage}] {source}")]
    Backend {
        stage: Stage,
        #[source]
        source: BackendError,
    },
    #[error("[rank] {0}")]
    Ranking(#[from] RankingError),
    #[error("[segment] segmenter found no segments")]
    NoSegments,
    #[error("[rank] source prompt {prompt:?} matched no segment above threshold {threshold}")]
    NoMatch {
        prompt: String,
        threshold: f64,
        selection: Box<Selection>,
    },
    #[error("[composite] {0}")]
    Composite(#[source] CoreError),
    #[error("cancelled")]
    Cancelled,
    #[error("no instructions to run")]
    EmptyInstructions,
    #[error("step index {index} out of range 0..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("session invariant violated: {0}")]
    Inconsistent(String),
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Backend { stage, .. } => Some(*stage),
            PipelineError::Ranking(_) | PipelineError::NoMatch { .. } => Some(Stage::Rank),
            PipelineError::NoSegments => Some(Stage::Segment),
            PipelineError::Composite(_) => Some(Stage::Composite),
            _ => None,
        }
    }
}

/// Cooperative cancellation flag, checked between pipeline stages.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }

    pub(crate) fn check(&self) -> Result<(), PipelineError> {
        if self.is_cancelled() {
            Err(PipelineError::Cancelled)
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_fills_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"seed": 9, "dilation_radius": 0}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.dilation_radius, 0);
        assert_eq!(c.feather_radius, DEFAULT_FEATHER_RADIUS);
        assert_eq!(c.on_no_match, NoMatchPolicy::Skip);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sead": 9}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"on_no_match": "error"}"#).is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        for c in [
            PipelineConfig { temperature: 0.0, ..Default::default() },
            PipelineConfig { temperature: f64::INFINITY, ..Default::default() },
            PipelineConfig { threshold: 1.2, ..Default::default() },
            PipelineConfig { stack_id: String::new(), ..Default::default() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn radii_scale_with_image() {
        let c = PipelineConfig::default_for_image(1024, 768);
        assert_eq!((c.dilation_radius, c.feather_radius), (6, 4));
        let c = PipelineConfig::default_for_image(512, 512);
        assert_eq!((c.dilation_radius, c.feather_radius), (3, 2));
        let c = PipelineConfig::default_for_image(64, 64);
        assert_eq!((c.dilation_radius, c.feather_radius), (0, 0));
    }
}
