use serde::{Deserialize, Serialize};

use super::{CancelToken, EditInstruction, NoMatchPolicy, PipelineConfig, PipelineError, Stage};
use crate::backends::{check_inpaint, check_segments, BackendError, BackendStack};
use crate::composite::composite;
use crate::image::{ImageBuffer, Rgb};
use crate::mask::Mask;
use crate::ranking::{rank_segments, select_override, select_target, Selection};

/// Value written into the selected region before it goes to the inpainter.
pub const ERASE_FILL: Rgb = [128, 128, 128];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFailure {
    pub stage: Option<Stage>,
    pub message: String,
}

impl From<&PipelineError> for StepFailure {
    fn from(e: &PipelineError) -> Self {
        Self {
            stage: e.stage(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepStatus {
    Applied,
    SkippedNoMatch,
    Failed(StepFailure),
}

/// The record of one replacement. `output_image` equals the step's input
/// unless the status is `Applied`.
#[derive(Debug, Clone, PartialEq)]
pub struct EditStep {
    pub instruction: EditInstruction,
    /// Absent only when the step failed before ranking finished.
    pub selection: Option<Selection>,
    /// Empty unless a segment was chosen.
    pub dilated_mask: Mask,
    pub output_image: ImageBuffer,
    pub seed: u64,
    pub status: StepStatus,
}

#[derive(Debug, Clone, Default)]
pub struct EditOptions<'a> {
    /// Use this seed instead of `config.seed`.
    pub seed: Option<u64>,
    /// Edit this segment instead of the automatic selection.
    pub override_segment: Option<&'a str>,
    pub cancel: Option<&'a CancelToken>,
}

/// Runs one full edit: segment, rank, select, dilate, erase, inpaint,
/// composite.
///
/// The stack is used as given; `config.stack_id` is informational here.
pub fn edit_once(
    image: &ImageBuffer,
    instruction: &EditInstruction,
    stack: &BackendStack,
    config: &PipelineConfig,
) -> Result<EditStep, PipelineError> {
    edit_once_with(image, instruction, stack, config, &EditOptions::default())
}

pub fn edit_once_with(
    image: &ImageBuffer,
    instruction: &EditInstruction,
    stack: &BackendStack,
    config: &PipelineConfig,
    opts: &EditOptions<'_>,
) -> Result<EditStep, PipelineError> {
    config.validate()?;
    let seed = opts.seed.unwrap_or(config.seed);
    let never = CancelToken::new();
    let cancel = opts.cancel.unwrap_or(&never);
    let selection = locate(image, instruction.source_prompt(), stack, config, opts.override_segment, cancel)?;

    let Some(chosen) = selection.chosen() else {
        return match config.on_no_match {
            NoMatchPolicy::Skip => Ok(EditStep {
                instruction: instruction.clone(),
                selection: Some(selection),
                dilated_mask: Mask::empty(image.width(), image.height()),
                output_image: image.clone(),
                seed,
                status: StepStatus::SkippedNoMatch,
            }),
            NoMatchPolicy::Error => Err(PipelineError::NoMatch {
                prompt: instruction.source_prompt().to_string(),
                threshold: config.threshold,
                selection: Box::new(selection),
            }),
        };
    };
    let mask = chosen.segment.mask().dilate(config.dilation_radius);

    let mut erased = image.clone();
    for idx in mask.indices() {
        erased.set_pixel_at(idx, ERASE_FILL);
    }

    cancel.check()?;
    let backend = |stage| move |source| PipelineError::Backend { stage, source };
    let generated = stack
        .inpainter
        .inpaint(&erased, &mask, instruction.target_prompt(), seed)
        .map_err(backend(Stage::Inpaint))?;
    check_inpaint(image, &generated).map_err(|m| backend(Stage::Inpaint)(BackendError::Failed(m)))?;

    let output_image =
        composite(image, &generated, &mask, config.feather_radius).map_err(PipelineError::Composite)?;
    Ok(EditStep {
        instruction: instruction.clone(),
        selection: Some(selection),
        dilated_mask: mask,
        output_image,
        seed,
        status: StepStatus::Applied,
    })
}

/// The segment and rank stages of an edit on their own: what the edit
/// would select for `source_prompt`, without touching any pixels.
pub fn rank_preview(
    image: &ImageBuffer,
    source_prompt: &str,
    stack: &BackendStack,
    config: &PipelineConfig,
) -> Result<Selection, PipelineError> {
    config.validate()?;
    locate(image, source_prompt, stack, config, None, &CancelToken::new())
}

fn locate(
    image: &ImageBuffer,
    source_prompt: &str,
    stack: &BackendStack,
    config: &PipelineConfig,
    override_segment: Option<&str>,
    cancel: &CancelToken,
) -> Result<Selection, PipelineError> {
    let backend = |source| PipelineError::Backend {
        stage: Stage::Segment,
        source,
    };
    cancel.check()?;
    let segments = stack.segmenter.segment(image).map_err(backend)?;
    check_segments(image, &segments).map_err(|m| backend(BackendError::Failed(m)))?;
    if segments.is_empty() {
        return Err(PipelineError::NoSegments);
    }

    cancel.check()?;
    let ranked = rank_segments(
        image,
        &segments,
        source_prompt,
        stack.scorer.as_ref(),
        &config.crop_spec,
        config.temperature,
    )?;
    Ok(match override_segment {
        Some(id) => select_override(ranked, id, config.threshold)?,
        None => select_target(ranked, config.threshold)?,
    })
}
