//! Grayscale raster type, bit-exact file I/O and the preprocessing operations
//! applied to every radiograph before augmentation.

mod io;
pub(crate) mod ops;

pub use io::{load_image, save_image, save_rgb_png};
pub use ops::{
    equalize_histogram, horizontal_mirror, invert, is_negative_channel, resize_bilinear,
    round_half_up, EqualizationTable,
};

use crate::error::{Error, Result};

/// 8-bit single-channel image, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions {width}x{height} must be positive"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Constant image. Panics on zero dimensions.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    /// Copy of rows `[start, end)`.
    pub fn crop_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.height {
            return Err(Error::InvalidParameter(format!(
                "row range [{start}, {end}) invalid for height {}",
                self.height
            )));
        }
        Self::new(
            self.width,
            end - start,
            self.pixels[start * self.width..end * self.width].to_vec(),
        )
    }

    /// Stacks `self` above `below`; widths must agree.
    pub fn vstack(&self, below: &GrayImage) -> Result<Self> {
        if self.width != below.width {
            return Err(Error::ShapeMismatch(format!(
                "cannot stack widths {} and {}",
                self.width, below.width
            )));
        }
        let mut pixels = self.pixels.clone();
        pixels.extend_from_slice(&below.pixels);
        Self::new(self.width, self.height + below.height, pixels)
    }

    /// Upside-down copy (flip about the horizontal axis).
    pub fn vertical_flip(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for r in (0..self.height).rev() {
            pixels.extend_from_slice(self.row(r));
        }
        Self {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as u64).sum::<u64>() as f64 / self.pixels.len() as f64
    }
}

/// 8-bit RGB image used for heatmap overlays.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}
