//! Pasting generated pixels back over the original.

use crate::error::CoreError;
use crate::image::ImageBuffer;
use crate::mask::Mask;

/// Blends `generated` over `original` inside `mask`.
///
/// With `feather_radius == 0` this is a hard switch. Otherwise mask pixels
/// within `feather_radius` (Chebyshev) of the nearest background pixel get
/// alpha `distance / feather_radius`; deeper pixels take the generated value
/// outright. The ramp lies inside the mask, so pixels outside the mask are
/// always copied from `original` unchanged.
pub fn composite(
    original: &ImageBuffer,
    generated: &ImageBuffer,
    mask: &Mask,
    feather_radius: u32,
) -> Result<ImageBuffer, CoreError> {
    if original.dimensions() != generated.dimensions() {
        return Err(CoreError::DimensionMismatch {
            left: original.dimensions(),
            right: generated.dimensions(),
        });
    }
    if original.dimensions() != mask.dimensions() {
        return Err(CoreError::DimensionMismatch {
            left: original.dimensions(),
            right: mask.dimensions(),
        });
    }

    let mut out = original.clone();
    if feather_radius == 0 {
        for idx in mask.indices() {
            out.set_pixel_at(idx, generated.pixel_at(idx));
        }
        return Ok(out);
    }

    let dist = distance_to_background(mask, feather_radius);
    let f = feather_radius as f64;
    for idx in mask.indices() {
        let alpha = (dist[idx] as f64 / f).clamp(0.0, 1.0);
        let (o, g) = (original.pixel_at(idx), generated.pixel_at(idx));
        let mut px = [0u8; 3];
        for c in 0..3 {
            let delta = g[c] as f64 - o[c] as f64;
            px[c] = (o[c] as f64 + (alpha * delta).round()).clamp(0.0, 255.0) as u8;
        }
        out.set_pixel_at(idx, px);
    }
    Ok(out)
}

/// Chebyshev distance from each pixel to the nearest pixel outside `mask`,
/// saturated at `cap`. Background pixels are 0; a mask with no background
/// at all reports `cap` everywhere.
pub(crate) fn distance_to_background(mask: &Mask, cap: u32) -> Vec<u32> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut d = vec![0u32; w * h];
    for idx in mask.indices() {
        d[idx] = cap;
    }
    // two-pass chamfer with unit weights on all 8 neighbours is exact for L∞
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if d[i] == 0 {
                continue;
            }
            let mut best = d[i];
            if x > 0 {
                best = best.min(d[i - 1] + 1);
            }
            if y > 0 {
                best = best.min(d[i - w] + 1);
                if x > 0 {
                    best = best.min(d[i - w - 1] + 1);
                }
                if x + 1 < w {
                    best = best.min(d[i - w + 1] + 1);
                }
            }
            d[i] = best;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            if d[i] == 0 {
                continue;
            }
            let mut best = d[i];
            if x + 1 < w {
                best = best.min(d[i + 1] + 1);
            }
            if y + 1 < h {
                best = best.min(d[i + w] + 1);
                if x + 1 < w {
                    best = best.min(d[i + w + 1] + 1);
                }
                if x > 0 {
                    best = best.min(d[i + w - 1] + 1);
                }
            }
            d[i] = best;
        }
    }
    d
}
