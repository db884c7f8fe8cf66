use crate::error::{Error, Result};

use super::Image;

/// Byte threshold for grayscale masks: values `>= 128` are lesion.
pub const MASK_THRESHOLD: u8 = 128;

/// Binary lesion segmentation, row-major; `true` is lesion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::InvalidDimensions {
                height,
                width,
                reason: "mask data length does not match height x width",
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn from_gray8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            height,
            width,
            bytes.iter().map(|&b| b >= MASK_THRESHOLD).collect(),
        )
    }

    pub fn to_gray8(&self) -> Vec<u8> {
        self.data.iter().map(|&l| if l { 255 } else { 0 }).collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn is_lesion(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn lesion_count(&self) -> usize {
        self.data.iter().filter(|&&l| l).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let lesion = self.lesion_count();
        lesion > 0 && lesion < self.data.len()
    }

    pub fn require_both_classes(&self) -> Result<()> {
        if self.has_both_classes() {
            Ok(())
        } else {
            Err(Error::SingleClassMask)
        }
    }

    pub fn ensure_matches(&self, img: &Image) -> Result<()> {
        if self.dims() != img.dims() {
            return Err(Error::DimensionMismatch {
                expected: img.dims(),
                actual: self.dims(),
            });
        }
        Ok(())
    }
}
