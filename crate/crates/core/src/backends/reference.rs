//! Deterministic stand-ins for the three model roles.
//!
//! * segmenter: uniform per-channel color quantization followed by
//!   4-connected component labelling.
//! * scorer: sums, over the color words in the prompt, the fraction of crop
//!   pixels whose HSV value falls in that color's range.
//! * inpainter: paints the mask with the first color word's swatch, or with
//!   the mean color of the ring just outside the mask.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{
    BackendError, Inpainter, InpainterInfo, ScoreRange, Scorer, ScorerInfo, Segmenter,
    SegmenterInfo,
};
use crate::image::{ImageBuffer, Rgb};
use crate::mask::Mask;
use crate::segment::Segment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmenterParams {
    pub quant_levels: u32,
    pub min_area_fraction: f64,
}

impl Default for SegmenterParams {
    fn default() -> Self {
        Self {
            quant_levels: 4,
            min_area_fraction: 0.001,
        }
    }
}

impl SegmenterParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(2..=256).contains(&self.quant_levels) {
            return Err(BackendError::InvalidInput(format!(
                "quant_levels must be in 2..=256, got {}",
                self.quant_levels
            )));
        }
        if !(0.0..1.0).contains(&self.min_area_fraction) {
            return Err(BackendError::InvalidInput(format!(
                "min_area_fraction must be in [0, 1), got {}",
                self.min_area_fraction
            )));
        }
        Ok(())
    }
}

pub struct ReferenceSegmenter {
    params: SegmenterParams,
    info: SegmenterInfo,
}

impl ReferenceSegmenter {
    /// Panics on invalid parameters; use [`ReferenceSegmenter::try_new`] for
    /// untrusted input.
    pub fn new(params: SegmenterParams) -> Self {
        Self::try_new(params).expect("invalid reference segmenter parameters")
    }

    pub fn try_new(params: SegmenterParams) -> Result<Self, BackendError> {
        params.validate()?;
        Ok(Self {
            params,
            info: SegmenterInfo {
                name: "reference-quantize-cc".into(),
                max_image_side: 4096,
                supports_overlapping_masks: false,
            },
        })
    }

    pub fn params(&self) -> SegmenterParams {
        self.params
    }
}

impl Segmenter for ReferenceSegmenter {
    fn info(&self) -> &SegmenterInfo {
        &self.info
    }

    fn segment(&self, image: &ImageBuffer) -> Result<Vec<Segment>, BackendError> {
        reference_segment(image, self.params)
    }

    fn segment_with_params(
        &self,
        image: &ImageBuffer,
        params: &serde_json::Value,
    ) -> Result<Vec<Segment>, BackendError> {
        if params.is_null() || params.as_object().is_some_and(|o| o.is_empty()) {
            return self.segment(image);
        }
        let p: SegmenterParams = serde_json::from_value(params.clone())
            .map_err(|e| BackendError::InvalidInput(format!("segmenter params: {e}")))?;
        reference_segment(image, p)
    }
}

/// Quantize-and-label segmentation. Segments are disjoint, sorted by area
/// descending (ties by first pixel), and scored by their area fraction.
pub fn reference_segment(
    image: &ImageBuffer,
    params: SegmenterParams,
) -> Result<Vec<Segment>, BackendError> {
    params.validate()?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let q = params.quant_levels;
    let quantized: Vec<[u8; 3]> = image
        .pixels()
        .map(|p| p.map(|v| ((v as u32 * q) / 256) as u8))
        .collect();

    const UNLABELLED: u32 = u32::MAX;
    let mut labels = vec![UNLABELLED; w * h];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..w * h {
        if labels[seed] != UNLABELLED {
            continue;
        }
        let label = components.len() as u32;
        let color = quantized[seed];
        let mut members = Vec::new();
        labels[seed] = label;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if labels[j] == UNLABELLED && quantized[j] == color {
                    labels[j] = label;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        components.push(members);
    }

    let total = (w * h) as f64;
    let min_area = params.min_area_fraction * total;
    // components were discovered in scan order, so index order == first-pixel order
    let mut kept: Vec<Vec<usize>> = components
        .into_iter()
        .filter(|c| c.len() as f64 >= min_area)
        .collect();
    kept.sort_by_key(|b| std::cmp::Reverse(b.len()));

    kept.into_iter()
        .enumerate()
        .map(|(i, members)| {
            let area_fraction = members.len() as f64 / total;
            let mask = Mask::from_indices(image.width(), image.height(), members)
                .map_err(|e| BackendError::Failed(e.to_string()))?;
            Segment::new(mask, area_fraction, format!("seg-{i:04}"))
                .map_err(|e| BackendError::Failed(e.to_string()))
        })
        .collect()
}

/// The fixed color vocabulary shared by the reference scorer and inpainter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexiconColor {
    Red,
    Green,
    Blue,
    Yellow,
    White,
    Black,
    Gray,
    Orange,
    Purple,
    Cyan,
}

impl LexiconColor {
    pub const ALL: [LexiconColor; 10] = [
        LexiconColor::Red,
        LexiconColor::Green,
        LexiconColor::Blue,
        LexiconColor::Yellow,
        LexiconColor::White,
        LexiconColor::Black,
        LexiconColor::Gray,
        LexiconColor::Orange,
        LexiconColor::Purple,
        LexiconColor::Cyan,
    ];

    pub fn from_word(word: &str) -> Option<Self> {
        Some(match word {
            "red" => Self::Red,
            "green" => Self::Green,
            "blue" => Self::Blue,
            "yellow" => Self::Yellow,
            "white" => Self::White,
            "black" => Self::Black,
            "gray" => Self::Gray,
            "orange" => Self::Orange,
            "purple" => Self::Purple,
            "cyan" => Self::Cyan,
            _ => return None,
        })
    }

    /// The swatch the reference inpainter paints with.
    pub fn rgb(self) -> Rgb {
        match self {
            Self::Red => [255, 0, 0],
            Self::Green => [0, 255, 0],
            Self::Blue => [0, 0, 255],
            Self::Yellow => [255, 255, 0],
            Self::White => [255, 255, 255],
            Self::Black => [0, 0, 0],
            Self::Gray => [128, 128, 128],
            Self::Orange => [255, 165, 0],
            Self::Purple => [128, 0, 128],
            Self::Cyan => [0, 255, 255],
        }
    }

    pub fn matches(self, rgb: Rgb) -> bool {
        let (h, s, v) = rgb_to_hsv(rgb);
        let achromatic = s < 0.15;
        let chromatic = s >= 0.4 && v >= 0.35;
        match self {
            Self::White => achromatic && v > 0.85,
            Self::Black => v < 0.15,
            Self::Gray => achromatic && (0.15..=0.85).contains(&v),
            Self::Red => chromatic && !(15.0..345.0).contains(&h),
            Self::Orange => chromatic && (15.0..45.0).contains(&h),
            Self::Yellow => chromatic && (45.0..70.0).contains(&h),
            Self::Green => chromatic && (70.0..165.0).contains(&h),
            Self::Cyan => chromatic && (165.0..195.0).contains(&h),
            Self::Blue => chromatic && (195.0..255.0).contains(&h),
            Self::Purple => chromatic && (255.0..345.0).contains(&h),
        }
    }
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv([r, g, b]: Rgb) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h, s, max)
}

/// Lowercased word tokens of a prompt, in order.
fn prompt_words(prompt: &str) -> impl Iterator<Item = String> + '_ {
    prompt
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

pub fn prompt_colors(prompt: &str) -> Vec<LexiconColor> {
    prompt_words(prompt)
        .filter_map(|w| LexiconColor::from_word(&w))
        .collect()
}

pub struct ReferenceScorer {
    info: ScorerInfo,
}

impl Default for ReferenceScorer {
    fn default() -> Self {
        Self::new()
    }
}

impl ReferenceScorer {
    pub fn new() -> Self {
        Self {
            info: ScorerInfo {
                name: "reference-color-lexicon".into(),
                score_range: ScoreRange::RawLogit,
                languages: vec!["en".into()],
                max_image_side: None,
            },
        }
    }
}

impl Scorer for ReferenceScorer {
    fn info(&self) -> &ScorerInfo {
        &self.info
    }

    fn score(&self, crops: &[ImageBuffer], prompt: &str) -> Result<Vec<f64>, BackendError> {
        reference_score(crops, prompt)
    }
}

/// Per crop: sum over color tokens of the fraction of matching pixels.
/// Result lies in `[0, number of color tokens]`.
pub fn reference_score(crops: &[ImageBuffer], prompt: &str) -> Result<Vec<f64>, BackendError> {
    if crops.is_empty() {
        return Err(BackendError::InvalidInput("no crops to score".into()));
    }
    let colors = prompt_colors(prompt);
    Ok(crops
        .iter()
        .map(|crop| {
            let n = crop.pixel_count() as f64;
            colors
                .iter()
                .map(|c| crop.pixels().filter(|&p| c.matches(p)).count() as f64 / n)
                .sum()
        })
        .collect())
}

pub struct ReferenceInpainter {
    info: InpainterInfo,
}

impl Default for ReferenceInpainter {
    fn default() -> Self {
        Self::new()
    }
}

impl ReferenceInpainter {
    pub fn new() -> Self {
        Self {
            info: InpainterInfo {
                name: "reference-flat-fill".into(),
                native_resolution: 512,
                deterministic: true,
                accepts_seed: false,
            },
        }
    }
}

impl Inpainter for ReferenceInpainter {
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
        reference_inpaint(image, mask, prompt, seed)
    }
}

/// Mid-gray fill used when the mask covers the whole image and there is no
/// surrounding ring to average.
const NO_RING_FILL: Rgb = [128, 128, 128];

/// Flat fill of the masked region. The seed is ignored.
pub fn reference_inpaint(
    image: &ImageBuffer,
    mask: &Mask,
    prompt: &str,
    _seed: u64,
) -> Result<ImageBuffer, BackendError> {
    if mask.dimensions() != image.dimensions() {
        return Err(BackendError::InvalidInput(format!(
            "mask {:?} does not match image {:?}",
            mask.dimensions(),
            image.dimensions()
        )));
    }
    if mask.is_empty() {
        return Ok(image.clone());
    }
    let fill = match prompt_colors(prompt).first() {
        Some(c) => c.rgb(),
        None => ring_mean(image, mask),
    };
    let mut out = image.clone();
    for idx in mask.indices() {
        out.set_pixel_at(idx, fill);
    }
    Ok(out)
}

fn ring_mean(image: &ImageBuffer, mask: &Mask) -> Rgb {
    let ring = mask
        .dilate(1)
        .subtract(mask)
        .expect("dilation preserves dimensions");
    let n = ring.area() as u64;
    if n == 0 {
        return NO_RING_FILL;
    }
    let mut sums = [0u64; 3];
    for idx in ring.indices() {
        let p = image.pixel_at(idx);
        for c in 0..3 {
            sums[c] += p[c] as u64;
        }
    }
    // round half up
    sums.map(|s| ((2 * s + n) / (2 * n)) as u8)
}
