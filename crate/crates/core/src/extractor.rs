//! Frozen semantic feature extractor.
//!
//! A fixed, seeded two-layer convolutional network stands in for a large
//! pretrained classifier: the distribution-matching objective only needs a
//! deterministic, differentiable feature map. Externally produced feature
//! batches can be fed to the divergence machinery directly, so this network
//! is replaceable without touching anything downstream.
//!
//! Pipeline per image:
//! `conv 3×3 (C→8, zero-pad) → tanh → 2×2 average pool → conv 3×3 (8→16)
//! → tanh → global average pool → 16-vector`.
//!
//! tanh keeps feature signs mixed, which exercises the whole `[0, 1]` range
//! of the cosine kernel downstream. Weights are `N(0, 1/fan_in)` from the
//! documented generator in [`crate::rng`] and are never updated.

use crate::conv;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::rng::DetRng;
use crate::tensor::{FeatureBatch, ImageTensor, Matrix, Origin};

/// Output feature dimension.
pub const FEATURE_DIM: usize = 16;
/// Hidden channels after the first convolution.
const MID_CHANNELS: usize = 8;
/// Images must be at least this tall/wide so the pooled map is non-empty.
const MIN_SIDE: usize = 4;

/// Frozen extractor weights, fully determined by `(seed, channels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorWeights<T> {
    channels: usize,
    seed: u64,
    conv1: Vec<T>, // 3·3·C·8
    conv2: Vec<T>, // 3·3·8·16
}

impl<T: Real> ExtractorWeights<T> {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn conv1(&self) -> &[T] {
        &self.conv1
    }

    pub fn conv2(&self) -> &[T] {
        &self.conv2
    }

    /// Exact-value copy at another precision (for cross-precision checks).
    pub fn cast<U: Real>(&self) -> ExtractorWeights<U> {
        ExtractorWeights {
            channels: self.channels,
            seed: self.seed,
            conv1: self.conv1.iter().map(|v| U::of(v.to_double())).collect(),
            conv2: self.conv2.iter().map(|v| U::of(v.to_double())).collect(),
        }
    }
}

/// Deterministic `N(0, 1/fan_in)` weights: conv1 is filled first, then
/// conv2, each row-major, from a single stream seeded by `seed`. Same seed
/// and channel count give bitwise-identical weights.
pub fn init_extractor<T: Real>(seed: u64, channels: usize) -> ExtractorWeights<T> {
    let mut rng = DetRng::new(seed);
    let fan1 = 9 * channels;
    let std1 = (1.0 / fan1 as f64).sqrt();
    let conv1 = (0..9 * channels * MID_CHANNELS)
        .map(|_| T::of(rng.next_normal() * std1))
        .collect();
    let fan2 = 9 * MID_CHANNELS;
    let std2 = (1.0 / fan2 as f64).sqrt();
    let conv2 = (0..9 * MID_CHANNELS * FEATURE_DIM)
        .map(|_| T::of(rng.next_normal() * std2))
        .collect();
    ExtractorWeights {
        channels,
        seed,
        conv1,
        conv2,
    }
}

fn check_batch<T: Real>(w: &ExtractorWeights<T>, batch: &[ImageTensor<T>]) -> Result<()> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Invalid("empty image batch".into()))?;
    for img in batch {
        if img.channels() != w.channels {
            return Err(Error::Shape(format!(
                "extractor expects {} channels, image has {}",
                w.channels,
                img.channels()
            )));
        }
        if !img.same_dims(first) {
            return Err(Error::Shape("images in a batch must share dims".into()));
        }
        if img.height() < MIN_SIDE || img.width() < MIN_SIDE {
            return Err(Error::Invalid(format!(
                "image {}x{} is smaller than {MIN_SIDE}x{MIN_SIDE}",
                img.height(),
                img.width()
            )));
        }
    }
    Ok(())
}

struct SingleForward<T> {
    a1: Vec<T>, // tanh(conv1), h×w×8
    a2: Vec<T>, // tanh(conv2), ph×pw×16
    feature: Vec<T>,
    ph: usize,
    pw: usize,
}

fn forward_single<T: Real>(w: &ExtractorWeights<T>, img: &ImageTensor<T>) -> SingleForward<T> {
    let (h, wd, c) = (img.height(), img.width(), img.channels());
    let mut a1 = vec![T::zero(); h * wd * MID_CHANNELS];
    conv::conv3x3_forward(img.as_slice(), h, wd, c, MID_CHANNELS, &w.conv1, None, &mut a1);
    conv::tanh_forward(&mut a1);
    let (pooled, ph, pw) = conv::avgpool2_forward(&a1, h, wd, MID_CHANNELS);
    let mut a2 = vec![T::zero(); ph * pw * FEATURE_DIM];
    conv::conv3x3_forward(&pooled, ph, pw, MID_CHANNELS, FEATURE_DIM, &w.conv2, None, &mut a2);
    conv::tanh_forward(&mut a2);
    let inv_area = T::of(1.0 / (ph * pw) as f64);
    let mut feature = vec![T::zero(); FEATURE_DIM];
    for px in a2.chunks_exact(FEATURE_DIM) {
        for (f, &v) in feature.iter_mut().zip(px) {
            *f += v;
        }
    }
    for f in &mut feature {
        *f *= inv_area;
    }
    SingleForward {
        a1,
        a2,
        feature,
        ph,
        pw,
    }
}

/// Map a batch of same-sized images to an n×16 feature batch.
///
/// Deterministic and batch-order equivariant. The result is tagged
/// [`Origin::Clear`]; retag the restored side with
/// [`FeatureBatch::with_origin`].
pub fn extract_features<T: Real>(
    w: &ExtractorWeights<T>,
    batch: &[ImageTensor<T>],
) -> Result<FeatureBatch<T>> {
    check_batch(w, batch)?;
    let mut data = Vec::with_capacity(batch.len() * FEATURE_DIM);
    for img in batch {
        data.extend_from_slice(&forward_single(w, img).feature);
    }
    FeatureBatch::new(batch.len(), FEATURE_DIM, data, Origin::Clear)
}

/// Propagate feature-space gradients back to image-space gradients.
///
/// `dl_df` is n×16, row `i` being `∂L/∂feature_i` for `batch[i]`. The map is
/// exactly linear in `dl_df`. The forward activations are recomputed here;
/// the extractor is cheap and frozen, so no cache type is exposed.
pub fn extract_backward<T: Real>(
    w: &ExtractorWeights<T>,
    batch: &[ImageTensor<T>],
    dl_df: &Matrix<T>,
) -> Result<Vec<ImageTensor<T>>> {
    check_batch(w, batch)?;
    if dl_df.rows() != batch.len() || dl_df.cols() != FEATURE_DIM {
        return Err(Error::Shape(format!(
            "gradient is {}x{}, expected {}x{FEATURE_DIM}",
            dl_df.rows(),
            dl_df.cols(),
            batch.len()
        )));
    }
    let mut grads = Vec::with_capacity(batch.len());
    for (img, g_feat) in batch.iter().zip((0..batch.len()).map(|i| dl_df.row(i))) {
        let (h, wd, c) = (img.height(), img.width(), img.channels());
        let fwd = forward_single(w, img);
        let (ph, pw) = (fwd.ph, fwd.pw);

        // global average pool: every pooled pixel sees g/area
        let inv_area = T::of(1.0 / (ph * pw) as f64);
        let mut g_a2 = vec![T::zero(); ph * pw * FEATURE_DIM];
        for px in g_a2.chunks_exact_mut(FEATURE_DIM) {
            for (g, &gf) in px.iter_mut().zip(g_feat) {
                *g = gf * inv_area;
            }
        }
        conv::tanh_backward(&fwd.a2, &mut g_a2);

        let mut g_pooled = vec![T::zero(); ph * pw * MID_CHANNELS];
        conv::conv3x3_backward_input(&g_a2, ph, pw, MID_CHANNELS, FEATURE_DIM, &w.conv2, &mut g_pooled);

        let mut g_a1 = conv::avgpool2_backward(&g_pooled, h, wd, MID_CHANNELS);
        conv::tanh_backward(&fwd.a1, &mut g_a1);

        let mut g_img = vec![T::zero(); h * wd * c];
        conv::conv3x3_backward_input(&g_a1, h, wd, c, MID_CHANNELS, &w.conv1, &mut g_img);
        grads.push(ImageTensor::new(h, wd, c, g_img)?);
    }
    Ok(grads)
}
