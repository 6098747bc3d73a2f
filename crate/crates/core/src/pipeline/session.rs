use super::edit::{edit_once_with, EditOptions, EditStep, StepFailure, StepStatus};
use super::{CancelToken, EditInstruction, PipelineConfig, PipelineError};
use crate::backends::BackendStack;
use crate::image::ImageBuffer;
use crate::mask::Mask;

/// A chain of edits over a base image. Step `k` consumed the output of step
/// `k - 1` (or the base image for `k == 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct EditSession {
    pub session_id: String,
    pub base_image: ImageBuffer,
    pub steps: Vec<EditStep>,
    pub config: PipelineConfig,
}

impl EditSession {
    pub fn new(
        session_id: impl Into<String>,
        base_image: ImageBuffer,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self {
            session_id: session_id.into(),
            base_image,
            steps: Vec::new(),
            config,
        })
    }

    /// The image after the last step.
    pub fn current_image(&self) -> &ImageBuffer {
        self.image_at(self.steps.len()).expect("in range")
    }

    /// `0` is the base image, `k` the output of the k-th step (1-based).
    pub fn image_at(&self, k: usize) -> Option<&ImageBuffer> {
        match k {
            0 => Some(&self.base_image),
            k => self.steps.get(k - 1).map(|s| &s.output_image),
        }
    }

    pub fn next_seed(&self) -> u64 {
        self.config.seed.wrapping_add(self.steps.len() as u64)
    }

    pub fn has_failed_step(&self) -> bool {
        self.steps
            .iter()
            .any(|s| matches!(s.status, StepStatus::Failed(_)))
    }

    /// Runs one edit on the current image and appends it. On error the
    /// session is left untouched.
    pub fn apply(
        &mut self,
        instruction: &EditInstruction,
        stack: &BackendStack,
        override_segment: Option<&str>,
        cancel: Option<&CancelToken>,
    ) -> Result<&EditStep, PipelineError> {
        let step = edit_once_with(
            self.current_image(),
            instruction,
            stack,
            &self.config,
            &EditOptions {
                seed: Some(self.next_seed()),
                override_segment,
                cancel,
            },
        )?;
        self.steps.push(step);
        Ok(self.steps.last().expect("just pushed"))
    }

    /// Keeps the first `to_step` steps.
    pub fn undo(&mut self, to_step: usize) -> Result<(), PipelineError> {
        if to_step > self.steps.len() {
            return Err(PipelineError::IndexOutOfRange {
                index: to_step,
                len: self.steps.len(),
            });
        }
        self.steps.truncate(to_step);
        Ok(())
    }

    /// Checks the chain invariants; used when a session is rebuilt from
    /// storage.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.config.validate()?;
        let dims = self.base_image.dimensions();
        for (k, step) in self.steps.iter().enumerate() {
            let bad = |m: String| Err(PipelineError::Inconsistent(format!("step {}: {m}", k + 1)));
            let input = self.image_at(k).expect("in range");
            if step.output_image.dimensions() != dims {
                return bad(format!("output is {:?}, base is {dims:?}", step.output_image.dimensions()));
            }
            if step.dilated_mask.dimensions() != dims {
                return bad("mask dimensions differ from the image".into());
            }
            match &step.status {
                StepStatus::Applied => {
                    if step.selection.as_ref().and_then(|s| s.chosen()).is_none() {
                        return bad("applied without a chosen segment".into());
                    }
                }
                StepStatus::SkippedNoMatch | StepStatus::Failed(_) => {
                    if &step.output_image != input {
                        return bad("non-applied step changed the image".into());
                    }
                }
            }
            if matches!(step.status, StepStatus::Failed(_)) && k + 1 != self.steps.len() {
                return bad("steps recorded after a failure".into());
            }
        }
        Ok(())
    }
}

/// Functional form of [`EditSession::undo`].
pub fn undo(session: &EditSession, to_step: usize) -> Result<EditSession, PipelineError> {
    let mut s = session.clone();
    s.undo(to_step)?;
    Ok(s)
}

/// Applies `instructions` in order. Step `k` uses seed `config.seed + k`.
/// Skipped steps pass their input through; the first failure is recorded
/// and ends the run.
pub fn run_session(
    base_image: &ImageBuffer,
    instructions: &[EditInstruction],
    stack: &BackendStack,
    config: &PipelineConfig,
) -> Result<EditSession, PipelineError> {
    let id = format!("session-{}", uuid::Uuid::new_v4().simple());
    run_session_with(id, base_image, instructions, stack, config, None)
}

/// Like [`run_session`], with an explicit id and cancellation. A cancelled
/// run returns the session as of its last completed step.
pub fn run_session_with(
    session_id: impl Into<String>,
    base_image: &ImageBuffer,
    instructions: &[EditInstruction],
    stack: &BackendStack,
    config: &PipelineConfig,
    cancel: Option<&CancelToken>,
) -> Result<EditSession, PipelineError> {
    if instructions.is_empty() {
        return Err(PipelineError::EmptyInstructions);
    }
    let mut session = EditSession::new(session_id, base_image.clone(), config.clone())?;
    for instruction in instructions {
        match session.apply(instruction, stack, None, cancel) {
            Ok(_) => {}
            Err(PipelineError::Cancelled) => break,
            Err(e) => {
                let input = session.current_image().clone();
                let selection = match &e {
                    PipelineError::NoMatch { selection, .. } => Some((**selection).clone()),
                    _ => None,
                };
                session.steps.push(EditStep {
                    instruction: instruction.clone(),
                    selection,
                    dilated_mask: Mask::empty(input.width(), input.height()),
                    output_image: input,
                    seed: session.next_seed(),
                    status: StepStatus::Failed(StepFailure::from(&e)),
                });
                break;
            }
        }
    }
    Ok(session)
}
