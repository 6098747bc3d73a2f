//! Run-length encoded binary masks.
//!
//! A [`Mask`] stores its foreground as `(start, length)` runs over the
//! row-major flattened grid. Runs are kept canonical: sorted, non-empty,
//! in bounds, and separated by at least one background pixel. Every
//! constructor either produces that form or rejects the input, so two masks
//! cover the same pixels iff they compare equal.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Dense row-major binary grid, the decoded form of a [`Mask`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGrid {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, CoreError> {
        if width == 0 || height == 0 {
            return Err(CoreError::EmptyImage);
        }
        if bits.len() != width as usize * height as usize {
            return Err(CoreError::BufferLength {
                expected: width as usize * height as usize,
                actual: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Builds a grid from nested rows of 0/1 values (nonzero is foreground).
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self, CoreError> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.as_ref().len()) as u32;
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width as usize {
                return Err(CoreError::BufferLength {
                    expected: width as usize,
                    actual: row.len(),
                });
            }
            bits.extend(row.iter().map(|&v| v != 0));
        }
        Self::from_bits(width, height, bits)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.bits
            .chunks(self.width as usize)
            .map(|r| r.iter().map(|&b| b as u8).collect())
            .collect()
    }
}

/// Tight bounding box, inclusive-exclusive: `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }
}

impl From<[u32; 4]> for BBox {
    fn from([x0, y0, x1, y1]: [u32; 4]) -> Self {
        Self { x0, y0, x1, y1 }
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// Canonical run-length encoded mask. Wire form:
/// `{"w": int, "h": int, "runs": [[start, length], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "MaskJson", into = "MaskJson")]
pub struct Mask {
    width: u32,
    height: u32,
    runs: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct MaskJson {
    w: u32,
    h: u32,
    runs: Vec<(usize, usize)>,
}

impl TryFrom<MaskJson> for Mask {
    type Error = CoreError;

    fn try_from(j: MaskJson) -> Result<Self, Self::Error> {
        Mask::from_runs(j.w, j.h, j.runs)
    }
}

impl From<Mask> for MaskJson {
    fn from(m: Mask) -> Self {
        MaskJson {
            w: m.width,
            h: m.height,
            runs: m.runs,
        }
    }
}

fn check_runs(width: u32, height: u32, runs: &[(usize, usize)]) -> Result<(), CoreError> {
    if width == 0 || height == 0 {
        return Err(CoreError::MalformedRuns(format!(
            "grid {width}x{height} is empty"
        )));
    }
    let total = width as usize * height as usize;
    let mut prev_end: Option<usize> = None;
    for (i, &(start, len)) in runs.iter().enumerate() {
        if len == 0 {
            return Err(CoreError::MalformedRuns(format!("run {i} has zero length")));
        }
        let end = start
            .checked_add(len)
            .filter(|&e| e <= total)
            .ok_or_else(|| {
                CoreError::MalformedRuns(format!(
                    "run {i} ({start}, {len}) exceeds {total} pixels"
                ))
            })?;
        if let Some(pe) = prev_end {
            if start <= pe {
                return Err(CoreError::MalformedRuns(format!(
                    "run {i} starts at {start}, not after previous run end {pe} plus a gap"
                )));
            }
        }
        prev_end = Some(end);
    }
    Ok(())
}

impl Mask {
    /// Validates `runs` against the canonical-form invariants.
    pub fn from_runs(width: u32, height: u32, runs: Vec<(usize, usize)>) -> Result<Self, CoreError> {
        check_runs(width, height, &runs)?;
        Ok(Self {
            width,
            height,
            runs,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            runs: Vec::new(),
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        let total = width as usize * height as usize;
        Self {
            width,
            height,
            runs: if total > 0 { vec![(0, total)] } else { Vec::new() },
        }
    }

    /// Encodes a grid into canonical runs.
    pub fn from_grid(grid: &BinaryGrid) -> Self {
        let mut runs = Vec::new();
        let mut open: Option<usize> = None;
        for (i, &b) in grid.bits.iter().enumerate() {
            match (b, open) {
                (true, None) => open = Some(i),
                (false, Some(s)) => {
                    runs.push((s, i - s));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            runs.push((s, grid.bits.len() - s));
        }
        Self {
            width: grid.width,
            height: grid.height,
            runs,
        }
    }

    /// Builds a mask from arbitrary (unsorted, possibly repeated) flat indices.
    pub fn from_indices(
        width: u32,
        height: u32,
        indices: impl IntoIterator<Item = usize>,
    ) -> Result<Self, CoreError> {
        let mut grid = BinaryGrid::new(width, height);
        for i in indices {
            let slot = grid.bits.get_mut(i).ok_or_else(|| {
                CoreError::MalformedRuns(format!("index {i} outside {width}x{height} grid"))
            })?;
            *slot = true;
        }
        Ok(Self::from_grid(&grid))
    }

    pub fn to_grid(&self) -> BinaryGrid {
        let mut grid = BinaryGrid::new(self.width, self.height);
        for &(s, l) in &self.runs {
            grid.bits[s..s + l].fill(true);
        }
        grid
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn runs(&self) -> &[(usize, usize)] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn area(&self) -> usize {
        self.runs.iter().map(|&(_, l)| l).sum()
    }

    pub fn contains(&self, idx: usize) -> bool {
        // first run with start > idx; the run before it is the only candidate
        let p = self.runs.partition_point(|&(s, _)| s <= idx);
        p > 0 && {
            let (s, l) = self.runs[p - 1];
            idx < s + l
        }
    }

    pub fn contains_xy(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.contains(y as usize * self.width as usize + x as usize)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.runs.iter().flat_map(|&(s, l)| s..s + l)
    }

    /// Tight bounding box, or `None` for an empty mask.
    pub fn bbox(&self) -> Option<BBox> {
        let w = self.width as usize;
        let first = self.runs.first()?;
        let last = self.runs.last()?;
        let y0 = first.0 / w;
        let y1 = (last.0 + last.1 - 1) / w + 1;
        let (mut x0, mut x1) = (w, 0);
        for &(s, l) in &self.runs {
            let (ys, ye) = (s / w, (s + l - 1) / w);
            if ys != ye {
                x0 = 0;
                x1 = w;
                break;
            }
            x0 = x0.min(s % w);
            x1 = x1.max((s + l - 1) % w + 1);
        }
        Some(BBox {
            x0: x0 as u32,
            y0: y0 as u32,
            x1: x1 as u32,
            y1: y1 as u32,
        })
    }

    fn ensure_same_dims(&self, other: &Mask) -> Result<(), CoreError> {
        if self.dimensions() != other.dimensions() {
            return Err(CoreError::DimensionMismatch {
                left: self.dimensions(),
                right: other.dimensions(),
            });
        }
        Ok(())
    }

    pub fn intersection_area(&self, other: &Mask) -> Result<usize, CoreError> {
        self.ensure_same_dims(other)?;
        let (a, b) = (&self.runs, &other.runs);
        let (mut i, mut j, mut acc) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            let (ae, be) = (a[i].0 + a[i].1, b[j].0 + b[j].1);
            let lo = a[i].0.max(b[j].0);
            let hi = ae.min(be);
            if hi > lo {
                acc += hi - lo;
            }
            if ae <= be {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(acc)
    }

    /// Intersection over union. Two empty masks are defined to have IoU 1.
    pub fn iou(&self, other: &Mask) -> Result<f64, CoreError> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return Ok(1.0);
        }
        Ok(inter as f64 / union as f64)
    }

    /// Pixels in `self` that are not in `other`.
    pub fn subtract(&self, other: &Mask) -> Result<Mask, CoreError> {
        self.ensure_same_dims(other)?;
        let mut grid = self.to_grid();
        for &(s, l) in &other.runs {
            grid.bits[s..s + l].fill(false);
        }
        Ok(Mask::from_grid(&grid))
    }

    pub fn is_subset_of(&self, other: &Mask) -> Result<bool, CoreError> {
        Ok(self.intersection_area(other)? == self.area())
    }

    /// Square-element dilation: every pixel within Chebyshev distance
    /// `radius` of the mask becomes foreground. Clipped to the grid.
    pub fn dilate(&self, radius: u32) -> Mask {
        if radius == 0 || self.is_empty() {
            return self.clone();
        }
        let (w, h) = (self.width as usize, self.height as usize);
        let r = radius as usize;
        let src = self.to_grid();
        let horiz = window_any(&src.bits, w, h, r, Axis::Row);
        let out = window_any(&horiz, w, h, r, Axis::Col);
        Mask::from_grid(&BinaryGrid {
            width: self.width,
            height: self.height,
            bits: out,
        })
    }
}

#[derive(Clone, Copy)]
enum Axis {
    Row,
    Col,
}

/// 1-D sliding "any" filter of half-width `r` along one axis.
fn window_any(bits: &[bool], w: usize, h: usize, r: usize, axis: Axis) -> Vec<bool> {
    let (lines, len) = match axis {
        Axis::Row => (h, w),
        Axis::Col => (w, h),
    };
    let at = |line: usize, k: usize| match axis {
        Axis::Row => line * w + k,
        Axis::Col => k * w + line,
    };
    let mut out = vec![false; bits.len()];
    let mut prefix = vec![0usize; len + 1];
    for line in 0..lines {
        for k in 0..len {
            prefix[k + 1] = prefix[k] + bits[at(line, k)] as usize;
        }
        for k in 0..len {
            let lo = k.saturating_sub(r);
            let hi = (k + r + 1).min(len);
            out[at(line, k)] = prefix[hi] > prefix[lo];
        }
    }
    out
}

/// Encodes a grid into a canonical mask.
pub fn rle_encode(grid: &BinaryGrid) -> Mask {
    Mask::from_grid(grid)
}

/// Decodes raw runs, rejecting anything that is not canonical.
pub fn rle_decode(width: u32, height: u32, runs: &[(usize, usize)]) -> Result<BinaryGrid, CoreError> {
    check_runs(width, height, runs)?;
    let mut grid = BinaryGrid::new(width, height);
    for &(s, l) in runs {
        grid.bits[s..s + l].fill(true);
    }
    Ok(grid)
}
