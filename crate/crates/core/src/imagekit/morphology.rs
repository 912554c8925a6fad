use super::{BinaryMask, ImageError};

/// Square structuring element anchored at its center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel {
    size: usize,
    weights: Vec<bool>,
}

impl Kernel {
    /// All-true `size x size` kernel.
    pub fn square(size: usize) -> Result<Self, ImageError> {
        Self::from_weights(size, vec![true; size * size])
    }

    pub fn from_weights(size: usize, weights: Vec<bool>) -> Result<Self, ImageError> {
        if size == 0 || size % 2 == 0 || weights.len() != size * size {
            return Err(ImageError::BadKernel(size));
        }
        Ok(Kernel { size, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `(row, col)` of the anchor.
    pub fn anchor(&self) -> (usize, usize) {
        (self.size / 2, self.size / 2)
    }

    pub fn weights(&self) -> &[bool] {
        &self.weights
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::square(5).expect("5 is odd")
    }
}

/// Binary max filter: a pixel is set iff any kernel-covered input pixel is
/// set. Pixels outside the image count as background.
pub fn dilate(m: &BinaryMask, k: &Kernel) -> BinaryMask {
    let (h, w) = (m.height(), m.width());
    let (ar, ac) = k.anchor();
    let offsets: Vec<(isize, isize)> = (0..k.size())
        .flat_map(|r| (0..k.size()).map(move |c| (r, c)))
        .filter(|&(r, c)| k.weights()[r * k.size() + c])
        .map(|(r, c)| (r as isize - ar as isize, c as isize - ac as isize))
        .collect();

    let mut out = BinaryMask::empty(h, w);
    for row in 0..h {
        for col in 0..w {
            let hit = offsets.iter().any(|&(dr, dc)| {
                let r = row as isize + dr;
                let c = col as isize + dc;
                r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && m.get(r as usize, c as usize)
            });
            if hit {
                out.set(row, col, true);
            }
        }
    }
    out
}
