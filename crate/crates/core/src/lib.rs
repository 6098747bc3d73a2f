//! Text-guided region editing.
//!
//! An edit finds the image segment that best matches a source prompt and
//! replaces it with content generated from a target prompt:
//!
//! 1. a [`Segmenter`](backends::Segmenter) proposes segments,
//! 2. a [`Scorer`](backends::Scorer) scores a crop of each against the
//!    source prompt and [`ranking`] picks the winner,
//! 3. the winning mask is dilated, an [`Inpainter`](backends::Inpainter)
//!    fills it from the target prompt, and the result is composited back.
//!
//! [`pipeline`] chains edits into sessions driven by a small instruction
//! language (`replace <source> with <target>; ...`).

pub mod backends;
pub mod composite;
pub mod error;
pub mod fixtures;
pub mod image;
pub mod mask;
pub mod pipeline;
pub mod ranking;
pub mod segment;

pub use composite::composite;
pub use error::CoreError;
pub use image::{ImageBuffer, Rgb};
pub use mask::{rle_decode, rle_encode, BBox, BinaryGrid, Mask};
pub use segment::Segment;
