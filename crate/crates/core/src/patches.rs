//! Sliding-window patch extraction.
//!
//! One complex image mixes several semantics; its K×K sliding-window
//! patches behave like a batch of single-semantic samples whose internal
//! statistics are much tighter than cross-image statistics. The grid walks
//! the image top-left to bottom-right at a fixed stride, dropping remainder
//! pixels at the bottom/right edges (no final-window snapping), so the same
//! grid applied to a restored/clear image pair yields positionally aligned
//! patch pairs.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::tensor::ImageTensor;

/// Window size and stride of the sliding window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    window: usize,
    stride: usize,
}

impl PatchSpec {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if stride == 0 || stride > window {
            return Err(Error::Invalid(format!(
                "stride must satisfy 1 <= stride <= window, got stride {stride}, window {window}"
            )));
        }
        Ok(PatchSpec { window, stride })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }
}

/// Top-left coordinates of every window, in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    coords: Vec<(usize, usize)>,
    rows: usize,
    cols: usize,
}

impl PatchGrid {
    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Grid for an H×W image: `floor((H−K)/s)+1` rows by `floor((W−K)/s)+1`
/// columns of window origins.
pub fn patch_grid(height: usize, width: usize, spec: PatchSpec) -> Result<PatchGrid> {
    let k = spec.window();
    if k > height || k > width {
        return Err(Error::Invalid(format!(
            "window {k} does not fit in a {height}x{width} image"
        )));
    }
    let rows = (height - k) / spec.stride() + 1;
    let cols = (width - k) / spec.stride() + 1;
    let mut coords = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            coords.push((r * spec.stride(), c * spec.stride()));
        }
    }
    Ok(PatchGrid { coords, rows, cols })
}

/// Cut the K×K window at every grid coordinate, in grid order. Values are
/// copied bit-exactly.
pub fn extract_patches<T: Real>(
    img: &ImageTensor<T>,
    grid: &PatchGrid,
    k: usize,
) -> Result<Vec<ImageTensor<T>>> {
    for &(r, c) in grid.coords() {
        if r + k > img.height() || c + k > img.width() {
            return Err(Error::Invalid(format!(
                "window at ({r}, {c}) size {k} exceeds image {}x{}",
                img.height(),
                img.width()
            )));
        }
    }
    let ch = img.channels();
    let mut patches = Vec::with_capacity(grid.len());
    for &(r0, c0) in grid.coords() {
        let mut data = Vec::with_capacity(k * k * ch);
        for r in r0..r0 + k {
            let start = img.index(r, c0, 0);
            data.extend_from_slice(&img.as_slice()[start..start + k * ch]);
        }
        patches.push(ImageTensor::new(k, k, ch, data)?);
    }
    Ok(patches)
}

/// Scatter per-patch gradients back onto an image-shaped accumulator;
/// overlapping windows add. Inverse-adjoint of [`extract_patches`].
pub(crate) fn scatter_patch_grads<T: Real>(
    acc: &mut ImageTensor<T>,
    patch_grads: &[ImageTensor<T>],
    grid: &PatchGrid,
    k: usize,
) {
    debug_assert_eq!(patch_grads.len(), grid.len());
    let ch = acc.channels();
    for (grad, &(r0, c0)) in patch_grads.iter().zip(grid.coords()) {
        for r in 0..k {
            let src = grad.index(r, 0, 0);
            let dst = acc.index(r0 + r, c0, 0);
            let row = &grad.as_slice()[src..src + k * ch];
            let target = &mut acc.as_mut_slice()[dst..dst + k * ch];
            for (t, &g) in target.iter_mut().zip(row) {
                *t += g;
            }
        }
    }
}
