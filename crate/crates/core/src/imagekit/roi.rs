use std::collections::VecDeque;

use super::{
    binarize, compute_histogram, dilate, otsu_threshold, to_grayscale, trace_borders, BinaryMask,
    BorderKind, Contour, Image, ImageError, Kernel, DEFAULT_BINS,
};

/// Region-of-interest mask; always non-empty when produced by [`roi_mask`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    mask: BinaryMask,
    area: usize,
}

impl RoiMask {
    pub fn from_mask(mask: BinaryMask) -> Self {
        let area = mask.count();
        RoiMask { mask, area }
    }

    /// Mask covering the whole image.
    pub fn full(height: usize, width: usize) -> Self {
        Self::from_mask(BinaryMask::new(height, width, vec![true; height * width]).unwrap())
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask.get(row, col)
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn data(&self) -> &[bool] {
        self.mask.data()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiOptions {
    pub bins: usize,
    pub kernel: Kernel,
    /// Treat dark pixels as foreground.
    pub invert: bool,
}

impl Default for RoiOptions {
    fn default() -> Self {
        RoiOptions {
            bins: DEFAULT_BINS,
            kernel: Kernel::default(),
            invert: false,
        }
    }
}

impl RoiOptions {
    pub fn with_kernel(kernel: Kernel) -> Self {
        RoiOptions {
            kernel,
            ..Default::default()
        }
    }
}

/// Grayscale, Otsu, dilate, trace; returns the filled region of the outer
/// border enclosing the largest area. Ties keep the first border in raster
/// order.
pub fn roi_mask(img: &Image, opts: &RoiOptions) -> Result<RoiMask, ImageError> {
    let gray = to_grayscale(img, opts.bins)?;
    let t = otsu_threshold(&compute_histogram(&gray))?;
    let mut bin = binarize(&gray, t);
    if opts.invert {
        let flipped = bin.data().iter().map(|b| !b).collect();
        bin = BinaryMask::new(bin.height(), bin.width(), flipped)?;
    }
    let dilated = dilate(&bin, &opts.kernel);
    let contours = trace_borders(&dilated);

    let mut best: Option<BinaryMask> = None;
    for c in contours.iter().filter(|c| c.kind == BorderKind::Outer) {
        let filled = fill_contour(c, dilated.height(), dilated.width());
        if best.as_ref().map_or(true, |b| filled.count() > b.count()) {
            best = Some(filled);
        }
    }
    match best {
        Some(m) if m.count() > 0 => Ok(RoiMask::from_mask(m)),
        _ => Err(ImageError::NoContour),
    }
}

/// Contour pixels plus every pixel they enclose, found by flooding the
/// exterior 4-connectedly with the contour as a wall.
pub fn fill_contour(c: &Contour, height: usize, width: usize) -> BinaryMask {
    let cols = width + 2;
    let rows = height + 2;
    let mut wall = vec![false; rows * cols];
    for &(r, col) in &c.points {
        wall[(r + 1) * cols + col + 1] = true;
    }
    let mut outside = vec![false; rows * cols];
    let mut queue = VecDeque::from([(0usize, 0usize)]);
    outside[0] = true;
    while let Some((r, col)) = queue.pop_front() {
        let neighbors = [
            (r.wrapping_sub(1), col),
            (r + 1, col),
            (r, col.wrapping_sub(1)),
            (r, col + 1),
        ];
        for (nr, nc) in neighbors {
            if nr >= rows || nc >= cols {
                continue;
            }
            let idx = nr * cols + nc;
            if !outside[idx] && !wall[idx] {
                outside[idx] = true;
                queue.push_back((nr, nc));
            }
        }
    }
    let data = (0..height)
        .flat_map(|r| (0..width).map(move |col| (r, col)))
        .map(|(r, col)| !outside[(r + 1) * cols + col + 1])
        .collect();
    BinaryMask::new(height, width, data).expect("sizes agree")
}

/// Zeroes every channel of pixels outside the mask.
pub fn apply_mask(img: &Image, m: &RoiMask) -> Result<Image, ImageError> {
    if (img.height(), img.width()) != (m.height(), m.width()) {
        return Err(ImageError::DimensionMismatch {
            left: img.dims(),
            right: (m.height(), m.width(), img.channels()),
        });
    }
    let c = img.channels();
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| if m.data()[i / c] { v } else { 0.0 })
        .collect();
    Image::new(img.height(), img.width(), c, data)
}
