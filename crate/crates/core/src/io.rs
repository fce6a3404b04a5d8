//! Bit-exact tensor file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size      field
//! 0       4         magic "D2TN"
//! 4       1         version, currently 1
//! 5       1         rank r
//! 6       4*r       dims, u32 each
//! 6+4*r   4*prod    payload, IEEE-754 f32, row-major
//! ```
//!
//! Images are stored rank-3 `[H, W, C]`, feature batches rank-2 `[n, d]`,
//! weight tensors rank-4/rank-1. Writing rejects non-finite entries;
//! reading validates magic, version, and exact payload length. Round trips
//! are bit-identical at single precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::num::Real;
use crate::tensor::{FeatureBatch, ImageTensor, Origin};

pub const MAGIC: [u8; 4] = *b"D2TN";
pub const VERSION: u8 = 1;

/// Upper bound on elements per file; rejects absurd headers before allocating.
const MAX_ELEMENTS: u64 = 1 << 31;

/// Raw decoded tensor: dims plus single-precision payload.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

/// A typed view of a decoded file, dispatched on rank.
#[derive(Debug, Clone)]
pub enum LoadedTensor<T> {
    /// Rank-2 file: `[n, d]` feature batch (tagged [`Origin::Clear`]; retag
    /// with [`FeatureBatch::with_origin`] as needed).
    Features(FeatureBatch<T>),
    /// Rank-3 file: `[H, W, C]` image.
    Image(ImageTensor<T>),
}

pub fn write_raw(path: &Path, dims: &[u32], payload: &[f32]) -> Result<()> {
    if dims.is_empty() || dims.len() > u8::MAX as usize {
        return Err(Error::Invalid(format!("unsupported rank {}", dims.len())));
    }
    let expected: u64 = dims.iter().map(|&d| d as u64).product();
    if expected != payload.len() as u64 {
        return Err(Error::Length(format!(
            "payload has {} values but dims {:?} require {expected}",
            payload.len(),
            dims
        )));
    }
    if !payload.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("refusing to write {}", path.display())));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    emit(&MAGIC)?;
    emit(&[VERSION, dims.len() as u8])?;
    for &d in dims {
        emit(&d.to_le_bytes())?;
    }
    for &v in payload {
        emit(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: &Path) -> Result<RawTensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 6];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    if header[..4] != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}",
            path.display(),
            &header[..4]
        )));
    }
    if header[4] != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {}",
            path.display(),
            header[4]
        )));
    }
    let rank = header[5] as usize;
    if rank == 0 {
        return Err(Error::Format(format!("{}: rank 0", path.display())));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format(format!("{}: truncated dims", path.display())))?;
        dims.push(u32::from_le_bytes(buf));
    }
    let count: u64 = dims.iter().map(|&d| d as u64).product();
    if count > MAX_ELEMENTS {
        return Err(Error::Length(format!(
            "{}: {count} elements exceeds limit",
            path.display()
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() as u64 != count * 4 {
        return Err(Error::Length(format!(
            "{}: dims {:?} require {} payload bytes, found {}",
            path.display(),
            dims,
            count * 4,
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(count as usize);
    for chunk in bytes.chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
    }
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("{}", path.display())));
    }
    Ok(RawTensor { dims, data })
}

/// Write an image as a rank-3 file (values cast to f32).
pub fn write_image<T: Real>(path: &Path, img: &ImageTensor<T>) -> Result<()> {
    let payload: Vec<f32> = img.as_slice().iter().map(|v| v.to_double() as f32).collect();
    write_raw(
        path,
        &[
            img.height() as u32,
            img.width() as u32,
            img.channels() as u32,
        ],
        &payload,
    )
}

/// Write a feature batch as a rank-2 file (values cast to f32).
pub fn write_features<T: Real>(path: &Path, fb: &FeatureBatch<T>) -> Result<()> {
    let payload: Vec<f32> = fb.as_slice().iter().map(|v| v.to_double() as f32).collect();
    write_raw(path, &[fb.n() as u32, fb.dim() as u32], &payload)
}

pub fn read_image<T: Real>(path: &Path) -> Result<ImageTensor<T>> {
    match read_tensor(path)? {
        LoadedTensor::Image(img) => Ok(img),
        LoadedTensor::Features(_) => Err(Error::Format(format!(
            "{}: expected rank-3 image, found rank-2 features",
            path.display()
        ))),
    }
}

pub fn read_features<T: Real>(path: &Path) -> Result<FeatureBatch<T>> {
    match read_tensor(path)? {
        LoadedTensor::Features(fb) => Ok(fb),
        LoadedTensor::Image(_) => Err(Error::Format(format!(
            "{}: expected rank-2 features, found rank-3 image",
            path.display()
        ))),
    }
}

/// Decode a file as either an image (rank 3) or a feature batch (rank 2).
pub fn read_tensor<T: Real>(path: &Path) -> Result<LoadedTensor<T>> {
    let raw = read_raw(path)?;
    let typed: Vec<T> = raw.data.iter().map(|&v| T::of(v as f64)).collect();
    match raw.dims.as_slice() {
        [n, d] => Ok(LoadedTensor::Features(FeatureBatch::new(
            *n as usize,
            *d as usize,
            typed,
            Origin::Clear,
        )?)),
        [h, w, c] => Ok(LoadedTensor::Image(ImageTensor::new(
            *h as usize,
            *w as usize,
            *c as usize,
            typed,
        )?)),
        dims => Err(Error::Format(format!(
            "{}: rank {} is neither an image nor a feature batch",
            path.display(),
            dims.len()
        ))),
    }
}
