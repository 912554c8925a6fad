//! Image representation and region-of-interest extraction.
//!
//! The extractor runs grayscale conversion, Otsu binarization, binary
//! dilation and Suzuki-Abe border following, then keeps the filled region of
//! the largest outer border.

mod contours;
mod morphology;
pub mod netpbm;
mod otsu;
mod roi;

pub use contours::{trace_borders, BorderKind, Contour};
pub use morphology::{dilate, Kernel};
pub use otsu::{binarize, compute_histogram, otsu_threshold, Histogram};
pub use roi::{apply_mask, fill_contour, roi_mask, RoiMask, RoiOptions};

use thiserror::Error;

/// Default number of histogram bins.
pub const DEFAULT_BINS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("image data has {actual} values, expected {expected} ({height}x{width}x{channels})")]
    BadLength {
        height: usize,
        width: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    BadChannels(usize),
    #[error("pixel value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("histogram has a single populated bin; no threshold separates two classes")]
    DegenerateImage,
    #[error("binarization produced no foreground region")]
    NoContour,
    #[error("invalid kernel size {0}; must be odd and at least 1")]
    BadKernel(usize),
    #[error("invalid bin count {0}; need at least 2")]
    BadBins(usize),
}

/// An `height x width x channels` image with values in `[0, 1]`, stored
/// row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::BadChannels(channels));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(ImageError::BadLength {
                height,
                width,
                channels,
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Image::new(height, width, channels, vec![value; height * width * channels])
            .expect("filled image must be valid")
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    /// Builds an image by clamping every value into `[0, 1]`. NaN becomes 0.
    pub fn from_clamped(
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Image::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }
}

/// Quantized single-channel image with intensities in `0..bins`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    bins: usize,
    data: Vec<u32>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, bins: usize, data: Vec<u32>) -> Result<Self, ImageError> {
        if bins < 2 {
            return Err(ImageError::BadBins(bins));
        }
        if data.len() != height * width {
            return Err(ImageError::BadLength {
                height,
                width,
                channels: 1,
                expected: height * width,
                actual: data.len(),
            });
        }
        if let Some((index, &v)) = data.iter().enumerate().find(|(_, v)| **v as usize >= bins) {
            return Err(ImageError::OutOfRange {
                index,
                value: v as f64,
            });
        }
        Ok(GrayImage {
            height,
            width,
            bins,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }
}

/// Collapses channels by their unweighted mean and quantizes to `bins`
/// levels with `floor(v * (bins - 1) + 0.5)`.
pub fn to_grayscale(img: &Image, bins: usize) -> Result<GrayImage, ImageError> {
    if bins < 2 {
        return Err(ImageError::BadBins(bins));
    }
    let c = img.channels;
    let top = (bins - 1) as f64;
    let data = img
        .data
        .chunks_exact(c)
        .map(|px| {
            let mean = px.iter().sum::<f64>() / c as f64;
            ((mean * top + 0.5).floor() as u32).min(bins as u32 - 1)
        })
        .collect();
    GrayImage::new(img.height, img.width, bins, data)
}

/// Boolean `height x width` grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self, ImageError> {
        if data.len() != height * width {
            return Err(ImageError::BadLength {
                height,
                width,
                channels: 1,
                expected: height * width,
                actual: data.len(),
            });
        }
        Ok(BinaryMask {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Pointwise union; panics if the dimensions differ.
    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!((self.height, self.width), (other.height, other.width));
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b)
    }
}
