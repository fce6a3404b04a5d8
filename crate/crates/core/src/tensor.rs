//! Dense containers: images, feature batches, and plain matrices.

use crate::error::{Error, Result};
use crate::num::Real;

/// H×W×C image, row-major `(row, column, channel)`.
///
/// Clean images live nominally in `[0, 1]`; noisy images may exceed that
/// range. Entries must be finite; this is checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> ImageTensor<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Invalid(format!(
                "image dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "image data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("image tensor".into()));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        ImageTensor {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: T) {
        let i = self.index(row, col, ch);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Cast every entry (used when moving between precisions).
    pub fn cast<U: Real>(&self) -> ImageTensor<U> {
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| U::of(v.to_double())).collect(),
        }
    }
}

/// Which side of the restoration pair a feature batch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Features of restored / denoised images (the gradient-carrying side).
    Restored,
    /// Features of clear target images (constants).
    Clear,
}

/// n×d matrix of per-sample feature vectors, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch<T> {
    n: usize,
    d: usize,
    data: Vec<T>,
    origin: Origin,
}

impl<T: Real> FeatureBatch<T> {
    pub fn new(n: usize, d: usize, data: Vec<T>, origin: Origin) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Invalid(format!(
                "feature batch dims must be positive, got {n}x{d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::Shape(format!(
                "feature data length {} does not match {n}x{d}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("feature batch".into()));
        }
        Ok(FeatureBatch { n, d, data, origin })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Stack two batches, `self` rows first.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.d != other.d {
            return Err(Error::Shape(format!(
                "cannot concat feature dims {} and {}",
                self.d, other.d
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        FeatureBatch::new(self.n + other.n, self.d, data, self.origin)
    }

    pub fn cast<U: Real>(&self) -> FeatureBatch<U> {
        FeatureBatch {
            n: self.n,
            d: self.d,
            data: self.data.iter().map(|v| U::of(v.to_double())).collect(),
            origin: self.origin,
        }
    }
}

/// Plain rows×cols matrix; used for gradients and probability tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: T) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_wrong_length() {
        assert!(matches!(
            ImageTensor::<f32>::new(2, 2, 1, vec![0.0; 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn image_rejects_non_finite() {
        assert!(matches!(
            ImageTensor::<f32>::new(1, 2, 1, vec![0.0, f32::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn image_indexing_is_row_major_channel_last() {
        let img = ImageTensor::new(2, 3, 2, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(img.get(0, 0, 0), 0.0);
        assert_eq!(img.get(0, 0, 1), 1.0);
        assert_eq!(img.get(0, 1, 0), 2.0);
        assert_eq!(img.get(1, 0, 0), 6.0);
        assert_eq!(img.get(1, 2, 1), 11.0);
    }

    #[test]
    fn feature_batch_rows() {
        let fb =
            FeatureBatch::new(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0], Origin::Clear).unwrap();
        assert_eq!(fb.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(fb.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(fb.rows().count(), 2);
    }

    #[test]
    fn concat_stacks_self_first() {
        let a = FeatureBatch::new(1, 2, vec![1.0f32, 2.0], Origin::Restored).unwrap();
        let b = FeatureBatch::new(2, 2, vec![3.0, 4.0, 5.0, 6.0], Origin::Restored).unwrap();
        let c = a.concat(&b).unwrap();
        assert_eq!(c.n(), 3);
        assert_eq!(c.row(0), &[1.0, 2.0]);
        assert_eq!(c.row(2), &[5.0, 6.0]);
    }
}
