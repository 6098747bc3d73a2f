//! Choosing the segment a source prompt refers to.
//!
//! Each segment is cropped (optionally padded, optionally with non-segment
//! pixels blanked), the crops are scored by a [`Scorer`], and raw scores are
//! turned into a softmax distribution over segments. The top segment is
//! selected if its probability clears a threshold.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{check_scores, BackendError, Scorer};
use crate::image::{ImageBuffer, Rgb};
use crate::mask::BBox;
use crate::segment::Segment;

/// Fill for non-segment pixels in [`BackgroundMode::Blank`] crops.
pub const BLANK_FILL: Rgb = [128, 128, 128];

pub const MAX_PADDING_FRACTION: f64 = 2.0;

/// Sum-to-one tolerance for normalized scores.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RankingError {
    #[error("no segments to rank")]
    EmptySegments,
    #[error("source prompt is empty")]
    EmptyPrompt,
    #[error("no scores to normalize")]
    EmptyScores,
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("temperature must be finite and > 0, got {0}")]
    BadTemperature(f64),
    #[error("threshold must be in [0, 1], got {0}")]
    BadThreshold(f64),
    #[error("padding_fraction must be in [0, {MAX_PADDING_FRACTION}], got {0}")]
    BadPadding(f64),
    #[error("segment {segment_id}: degenerate bounding box {bbox:?}")]
    DegenerateBBox { segment_id: String, bbox: BBox },
    #[error("segment {segment_id}: mask {mask:?} does not fit image {image:?}")]
    OutOfBounds {
        segment_id: String,
        mask: (u32, u32),
        image: (u32, u32),
    },
    #[error("duplicate segment_id {0}")]
    DuplicateSegmentId(String),
    #[error("scoring {n} segments ({ids}): {source}")]
    Scorer {
        n: usize,
        ids: String,
        #[source]
        source: BackendError,
    },
    #[error("malformed ranking: {0}")]
    Malformed(String),
    #[error("no segment with id {0}")]
    UnknownSegment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundMode {
    /// Leave surrounding pixels as they are.
    #[default]
    Keep,
    /// Replace non-segment pixels with mid-gray.
    Blank,
}

/// How a segment is presented to the scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CropSpecJson", into = "CropSpecJson")]
pub struct CropSpec {
    padding_fraction: f64,
    background_mode: BackgroundMode,
}

#[derive(Serialize, Deserialize)]
struct CropSpecJson {
    padding_fraction: f64,
    #[serde(default)]
    background_mode: BackgroundMode,
}

impl TryFrom<CropSpecJson> for CropSpec {
    type Error = RankingError;

    fn try_from(j: CropSpecJson) -> Result<Self, Self::Error> {
        CropSpec::new(j.padding_fraction, j.background_mode)
    }
}

impl From<CropSpec> for CropSpecJson {
    fn from(c: CropSpec) -> Self {
        CropSpecJson {
            padding_fraction: c.padding_fraction,
            background_mode: c.background_mode,
        }
    }
}

impl Default for CropSpec {
    fn default() -> Self {
        Self {
            padding_fraction: 0.15,
            background_mode: BackgroundMode::Keep,
        }
    }
}

impl CropSpec {
    pub fn new(padding_fraction: f64, background_mode: BackgroundMode) -> Result<Self, RankingError> {
        if !(0.0..=MAX_PADDING_FRACTION).contains(&padding_fraction) {
            return Err(RankingError::BadPadding(padding_fraction));
        }
        Ok(Self {
            padding_fraction,
            background_mode,
        })
    }

    pub fn padding_fraction(&self) -> f64 {
        self.padding_fraction
    }

    pub fn background_mode(&self) -> BackgroundMode {
        self.background_mode
    }

    /// The bbox grown by `round(padding_fraction * max(w, h))` on every side,
    /// clamped to a `width × height` image.
    pub fn crop_region(&self, bbox: BBox, width: u32, height: u32) -> BBox {
        let side = bbox.width().max(bbox.height()) as f64;
        let pad = (self.padding_fraction * side).round() as u32;
        BBox {
            x0: bbox.x0.saturating_sub(pad),
            y0: bbox.y0.saturating_sub(pad),
            x1: bbox.x1.saturating_add(pad).min(width),
            y1: bbox.y1.saturating_add(pad).min(height),
        }
    }
}

pub fn prepare_crop(image: &ImageBuffer, segment: &Segment, spec: &CropSpec) -> Result<ImageBuffer, RankingError> {
    if segment.mask().dimensions() != image.dimensions() {
        return Err(RankingError::OutOfBounds {
            segment_id: segment.id().to_string(),
            mask: segment.mask().dimensions(),
            image: image.dimensions(),
        });
    }
    let bbox = segment.bbox();
    if bbox.width() == 0 || bbox.height() == 0 {
        return Err(RankingError::DegenerateBBox {
            segment_id: segment.id().to_string(),
            bbox,
        });
    }
    let r = spec.crop_region(bbox, image.width(), image.height());
    let mut crop = image
        .crop(r.x0, r.y0, r.x1, r.y1)
        .map_err(|_| RankingError::DegenerateBBox {
            segment_id: segment.id().to_string(),
            bbox: r,
        })?;
    if spec.background_mode == BackgroundMode::Blank {
        let (cw, iw) = (crop.width() as usize, image.width() as usize);
        let mask = segment.mask();
        for cy in 0..crop.height() as usize {
            for cx in 0..cw {
                let src = (cy + r.y0 as usize) * iw + cx + r.x0 as usize;
                if !mask.contains(src) {
                    crop.set_pixel_at(cy * cw + cx, BLANK_FILL);
                }
            }
        }
    }
    Ok(crop)
}

/// `softmax(raw / temperature)`.
pub fn normalize_scores(raw: &[f64], temperature: f64) -> Result<Vec<f64>, RankingError> {
    if raw.is_empty() {
        return Err(RankingError::EmptyScores);
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(RankingError::BadTemperature(temperature));
    }
    if let Some(&bad) = raw.iter().find(|v| !v.is_finite()) {
        return Err(RankingError::NonFinite(bad));
    }
    let scaled: Vec<f64> = raw.iter().map(|v| v / temperature).collect();
    if let Some(&bad) = scaled.iter().find(|v| !v.is_finite()) {
        return Err(RankingError::NonFinite(bad));
    }
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSegment {
    pub segment: Segment,
    pub raw_score: f64,
    pub norm_score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Descending score, then larger area, then smaller id.
fn rank_order(a: &RankedSegment, b: &RankedSegment) -> Ordering {
    b.norm_score
        .partial_cmp(&a.norm_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.segment.area().cmp(&a.segment.area()))
        .then_with(|| a.segment.id().cmp(b.segment.id()))
}

/// Scores every segment against `source_prompt` and returns them in rank
/// order. The prompt reaches the scorer unmodified.
pub fn rank_segments(
    image: &ImageBuffer,
    segments: &[Segment],
    source_prompt: &str,
    scorer: &dyn Scorer,
    spec: &CropSpec,
    temperature: f64,
) -> Result<Vec<RankedSegment>, RankingError> {
    if segments.is_empty() {
        return Err(RankingError::EmptySegments);
    }
    if source_prompt.trim().is_empty() {
        return Err(RankingError::EmptyPrompt);
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(RankingError::BadTemperature(temperature));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = segments.iter().find(|s| !seen.insert(s.id())) {
        return Err(RankingError::DuplicateSegmentId(dup.id().to_string()));
    }

    let max_side = scorer.info().max_image_side;
    let crops = segments
        .iter()
        .map(|s| {
            let crop = prepare_crop(image, s, spec)?;
            Ok(match max_side {
                Some(m) => crop.fit_within(m),
                None => crop,
            })
        })
        .collect::<Result<Vec<_>, RankingError>>()?;

    let scorer_context = |source| RankingError::Scorer {
        n: segments.len(),
        ids: segments.iter().map(Segment::id).collect::<Vec<_>>().join(","),
        source,
    };
    let raw = scorer.score(&crops, source_prompt).map_err(scorer_context)?;
    check_scores(crops.len(), &raw).map_err(|m| scorer_context(BackendError::Failed(m)))?;
    let norm = normalize_scores(&raw, temperature)?;

    let mut ranked: Vec<RankedSegment> = segments
        .iter()
        .zip(raw.iter().zip(norm))
        .map(|(s, (&raw_score, norm_score))| RankedSegment {
            segment: s.clone(),
            raw_score,
            norm_score,
            rank: 0,
        })
        .collect();
    ranked.sort_by(rank_order);
    for (i, r) in ranked.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// The rank-1 segment cleared the threshold.
    Selected { segment_id: String },
    /// A caller named the segment explicitly, bypassing the threshold.
    Overridden { segment_id: String },
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub outcome: Outcome,
    pub threshold_used: f64,
    pub all_ranked: Vec<RankedSegment>,
}

impl Selection {
    /// The chosen segment, for either `Selected` or `Overridden`.
    pub fn chosen(&self) -> Option<&RankedSegment> {
        let id = match &self.outcome {
            Outcome::Selected { segment_id } | Outcome::Overridden { segment_id } => segment_id,
            Outcome::NoMatch => return None,
        };
        self.all_ranked.iter().find(|r| r.segment.id() == id)
    }

    pub fn is_no_match(&self) -> bool {
        self.outcome == Outcome::NoMatch
    }
}

fn check_well_formed(ranked: &[RankedSegment]) -> Result<(), RankingError> {
    if ranked.is_empty() {
        return Err(RankingError::Malformed("empty ranking".into()));
    }
    let mut sum = 0.0;
    for (i, r) in ranked.iter().enumerate() {
        if r.rank != i + 1 {
            return Err(RankingError::Malformed(format!(
                "position {i} holds rank {}",
                r.rank
            )));
        }
        if !(0.0..=1.0).contains(&r.norm_score) {
            return Err(RankingError::Malformed(format!(
                "norm_score {} outside [0, 1]",
                r.norm_score
            )));
        }
        if i > 0 && r.norm_score > ranked[i - 1].norm_score {
            return Err(RankingError::Malformed(format!(
                "rank {} outscores rank {}",
                r.rank,
                r.rank - 1
            )));
        }
        sum += r.norm_score;
    }
    if (sum - 1.0).abs() > NORM_TOLERANCE * ranked.len().max(1) as f64 {
        return Err(RankingError::Malformed(format!("norm_scores sum to {sum}")));
    }
    Ok(())
}

fn check_threshold(threshold: f64) -> Result<(), RankingError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(RankingError::BadThreshold(threshold));
    }
    Ok(())
}

/// Selects the rank-1 segment if its normalized score is at least
/// `threshold`.
pub fn select_target(ranked: Vec<RankedSegment>, threshold: f64) -> Result<Selection, RankingError> {
    check_threshold(threshold)?;
    check_well_formed(&ranked)?;
    let top = &ranked[0];
    let outcome = if top.norm_score >= threshold {
        Outcome::Selected {
            segment_id: top.segment.id().to_string(),
        }
    } else {
        Outcome::NoMatch
    };
    Ok(Selection {
        outcome,
        threshold_used: threshold,
        all_ranked: ranked,
    })
}

/// Selects `segment_id` regardless of rank or threshold.
pub fn select_override(
    ranked: Vec<RankedSegment>,
    segment_id: &str,
    threshold: f64,
) -> Result<Selection, RankingError> {
    check_threshold(threshold)?;
    check_well_formed(&ranked)?;
    if !ranked.iter().any(|r| r.segment.id() == segment_id) {
        return Err(RankingError::UnknownSegment(segment_id.to_string()));
    }
    Ok(Selection {
        outcome: Outcome::Overridden {
            segment_id: segment_id.to_string(),
        },
        threshold_used: threshold,
        all_ranked: ranked,
    })
}
