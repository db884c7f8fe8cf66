use crate::error::{Error, Result};

use super::Mask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PatchClass {
    Lesion,
    Background,
    Boundary,
}

/// Square-patch tiling of the top-left `rows * patch_size` by
/// `cols * patch_size` region of a mask. Ragged borders are cropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    patch_size: usize,
    rows: usize,
    cols: usize,
    classes: Vec<PatchClass>,
}

impl PatchGrid {
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Class of the patch at grid position `(row, col)`.
    pub fn class(&self, row: usize, col: usize) -> PatchClass {
        self.classes[row * self.cols + col]
    }

    /// Classes in raster order.
    pub fn classes(&self) -> &[PatchClass] {
        &self.classes
    }

    pub fn count(&self, class: PatchClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Raster indices of every patch with the given class.
    pub fn indices_of(&self, class: PatchClass) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// Pixel dimensions of the tiled region.
    pub fn covered_dims(&self) -> (usize, usize) {
        (self.rows * self.patch_size, self.cols * self.patch_size)
    }
}

pub fn classify_patches(mask: &Mask, patch_size: usize) -> Result<PatchGrid> {
    if patch_size < 2 || patch_size > mask.height() || patch_size > mask.width() {
        return Err(Error::InvalidPatchSize {
            patch_size,
            height: mask.height(),
            width: mask.width(),
        });
    }
    let rows = mask.height() / patch_size;
    let cols = mask.width() / patch_size;
    let mut classes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut lesion = 0usize;
            for y in r * patch_size..(r + 1) * patch_size {
                for x in c * patch_size..(c + 1) * patch_size {
                    lesion += usize::from(mask.is_lesion(y, x));
                }
            }
            classes.push(match lesion {
                0 => PatchClass::Background,
                n if n == patch_size * patch_size => PatchClass::Lesion,
                _ => PatchClass::Boundary,
            });
        }
    }
    Ok(PatchGrid {
        patch_size,
        rows,
        cols,
        classes,
    })
}
