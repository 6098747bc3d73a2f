//! Fixed-format 8-bit RGB raster used across the whole pipeline.

use std::io::Cursor;

use image::{ImageFormat, ImageReader, RgbImage};
use tracing::warn;

use crate::error::CoreError;

pub const CHANNELS: usize = 3;

pub type Rgb = [u8; 3];

/// Row-major 8-bit RGB image. `data.len() == width * height * 3` always holds.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, CoreError> {
        if width == 0 || height == 0 {
            return Err(CoreError::EmptyImage);
        }
        let expected = width as usize * height as usize * CHANNELS;
        if data.len() != expected {
            return Err(CoreError::BufferLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Result<Self, CoreError> {
        let n = width as usize * height as usize;
        let data = color.iter().copied().cycle().take(n * CHANNELS).collect();
        Self::new(width, height, data)
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> Rgb,
    ) -> Result<Self, CoreError> {
        let mut data = Vec::with_capacity(width as usize * height as usize * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
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

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    /// Pixel at flat row-major index `idx`.
    pub fn pixel_at(&self, idx: usize) -> Rgb {
        let o = idx * CHANNELS;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        self.pixel_at(y as usize * self.width as usize + x as usize)
    }

    pub fn set_pixel_at(&mut self, idx: usize, rgb: Rgb) {
        let o = idx * CHANNELS;
        self.data[o..o + CHANNELS].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.data.chunks_exact(CHANNELS).map(|c| [c[0], c[1], c[2]])
    }

    /// Copies the half-open rectangle `[x0, x1) × [y0, y1)`.
    pub fn crop(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self, CoreError> {
        if x0 >= x1 || y0 >= y1 || x1 > self.width || y1 > self.height {
            return Err(CoreError::CropOutOfBounds {
                rect: (x0, y0, x1, y1),
                width: self.width,
                height: self.height,
            });
        }
        let row_bytes = (x1 - x0) as usize * CHANNELS;
        let mut data = Vec::with_capacity(row_bytes * (y1 - y0) as usize);
        for y in y0..y1 {
            let start = (y as usize * self.width as usize + x0 as usize) * CHANNELS;
            data.extend_from_slice(&self.data[start..start + row_bytes]);
        }
        Self::new(x1 - x0, y1 - y0, data)
    }

    /// Bilinear downscale so the longer side is at most `max_side`. Images that
    /// already fit are returned unchanged.
    pub fn fit_within(&self, max_side: u32) -> Self {
        let longest = self.width.max(self.height);
        if max_side == 0 || longest <= max_side {
            return self.clone();
        }
        let scale = max_side as f64 / longest as f64;
        let w = ((self.width as f64 * scale).round() as u32).max(1);
        let h = ((self.height as f64 * scale).round() as u32).max(1);
        let resized = image::imageops::resize(
            &self.to_rgb_image(),
            w,
            h,
            image::imageops::FilterType::Triangle,
        );
        Self::from_rgb_image(resized)
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction")
    }

    pub fn from_rgb_image(img: RgbImage) -> Self {
        let (width, height) = img.dimensions();
        Self {
            width,
            height,
            data: img.into_raw(),
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>, CoreError> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image()
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| CoreError::Codec(e.to_string()))?;
        Ok(out.into_inner())
    }

    /// Decodes PNG (or any format the `image` crate sniffs). Alpha is dropped.
    pub fn from_png(bytes: &[u8]) -> Result<Self, CoreError> {
        let reader = ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| CoreError::Codec(e.to_string()))?;
        let decoded = reader
            .decode()
            .map_err(|e| CoreError::Codec(e.to_string()))?;
        if decoded.color().has_alpha() {
            warn!(
                width = decoded.width(),
                height = decoded.height(),
                "dropping alpha channel from input image"
            );
        }
        let img = Self::from_rgb_image(decoded.to_rgb8());
        if img.width == 0 || img.height == 0 {
            return Err(CoreError::EmptyImage);
        }
        Ok(img)
    }

    /// Reads only the header to get dimensions.
    pub fn png_dimensions(bytes: &[u8]) -> Result<(u32, u32), CoreError> {
        ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| CoreError::Codec(e.to_string()))?
            .into_dimensions()
            .map_err(|e| CoreError::Codec(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths() {
        assert!(matches!(
            ImageBuffer::new(2, 2, vec![0; 11]),
            Err(CoreError::BufferLength { expected: 12, .. })
        ));
        assert!(matches!(
            ImageBuffer::new(0, 2, vec![]),
            Err(CoreError::EmptyImage)
        ));
    }

    #[test]
    fn png_roundtrip_is_lossless() {
        let img = ImageBuffer::from_fn(7, 5, |x, y| [x as u8 * 30, y as u8 * 40, 200]).unwrap();
        let back = ImageBuffer::from_png(&img.to_png().unwrap()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn alpha_is_dropped() {
        let rgba = image::RgbaImage::from_pixel(3, 2, image::Rgba([10, 20, 30, 7]));
        let mut bytes = Cursor::new(Vec::new());
        rgba.write_to(&mut bytes, ImageFormat::Png).unwrap();
        let img = ImageBuffer::from_png(bytes.get_ref()).unwrap();
        assert_eq!(img.dimensions(), (3, 2));
        assert!(img.pixels().all(|p| p == [10, 20, 30]));
    }

    #[test]
    fn crop_copies_rows() {
        let img = ImageBuffer::from_fn(4, 4, |x, y| [x as u8, y as u8, 0]).unwrap();
        let c = img.crop(1, 2, 3, 4).unwrap();
        assert_eq!(c.dimensions(), (2, 2));
        assert_eq!(c.pixel(0, 0), [1, 2, 0]);
        assert_eq!(c.pixel(1, 1), [2, 3, 0]);
        assert!(img.crop(2, 2, 2, 3).is_err());
        assert!(img.crop(0, 0, 5, 1).is_err());
    }

    #[test]
    fn fit_within_downscales_longest_side() {
        let img = ImageBuffer::filled(200, 100, [9, 9, 9]).unwrap();
        let small = img.fit_within(50);
        assert_eq!(small.dimensions(), (50, 25));
        assert!(small.pixels().all(|p| p == [9, 9, 9]));
        assert_eq!(img.fit_within(400), img);
    }
}
