//! Residual denoising network with manual backpropagation.
//!
//! `G(x) = x − r(x)` where `r` is `conv 3×3 (C→16) → tanh → conv 3×3
//! (16→16) → tanh → conv 3×3 (16→C)`, all zero-padded, stride 1, with
//! per-layer biases. The residual form makes the zero-weight network the
//! identity, which the tests use as a hook.

use crate::conv;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::rng::DetRng;
use crate::tensor::ImageTensor;

/// Hidden width of the two inner layers.
pub const HIDDEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserWeights<T> {
    channels: usize,
    pub conv1_w: Vec<T>, // 3·3·C·16
    pub conv1_b: Vec<T>, // 16
    pub conv2_w: Vec<T>, // 3·3·16·16
    pub conv2_b: Vec<T>, // 16
    pub conv3_w: Vec<T>, // 3·3·16·C
    pub conv3_b: Vec<T>, // C
}

/// Gradients with the same shapes as [`DenoiserWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserGrads<T> {
    pub conv1_w: Vec<T>,
    pub conv1_b: Vec<T>,
    pub conv2_w: Vec<T>,
    pub conv2_b: Vec<T>,
    pub conv3_w: Vec<T>,
    pub conv3_b: Vec<T>,
}

impl<T: Real> DenoiserWeights<T> {
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// All parameter tensors in a fixed order (paired with
    /// [`DenoiserGrads::params`]).
    pub fn params_mut(&mut self) -> [&mut Vec<T>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.conv3_w,
            &mut self.conv3_b,
        ]
    }

    pub fn params(&self) -> [&Vec<T>; 6] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.conv3_w,
            &self.conv3_b,
        ]
    }

    /// Exact-value copy at another precision (for cross-precision checks).
    pub fn cast<U: Real>(&self) -> DenoiserWeights<U> {
        let widen = |v: &Vec<T>| -> Vec<U> { v.iter().map(|x| U::of(x.to_double())).collect() };
        DenoiserWeights {
            channels: self.channels,
            conv1_w: widen(&self.conv1_w),
            conv1_b: widen(&self.conv1_b),
            conv2_w: widen(&self.conv2_w),
            conv2_b: widen(&self.conv2_b),
            conv3_w: widen(&self.conv3_w),
            conv3_b: widen(&self.conv3_b),
        }
    }

    /// Zero weights: the identity denoiser (test hook).
    pub fn zeros(channels: usize) -> Self {
        DenoiserWeights {
            channels,
            conv1_w: vec![T::zero(); 9 * channels * HIDDEN],
            conv1_b: vec![T::zero(); HIDDEN],
            conv2_w: vec![T::zero(); 9 * HIDDEN * HIDDEN],
            conv2_b: vec![T::zero(); HIDDEN],
            conv3_w: vec![T::zero(); 9 * HIDDEN * channels],
            conv3_b: vec![T::zero(); channels],
        }
    }
}

impl<T: Real> DenoiserGrads<T> {
    pub fn zeros(channels: usize) -> Self {
        DenoiserGrads {
            conv1_w: vec![T::zero(); 9 * channels * HIDDEN],
            conv1_b: vec![T::zero(); HIDDEN],
            conv2_w: vec![T::zero(); 9 * HIDDEN * HIDDEN],
            conv2_b: vec![T::zero(); HIDDEN],
            conv3_w: vec![T::zero(); 9 * HIDDEN * channels],
            conv3_b: vec![T::zero(); channels],
        }
    }

    pub fn params(&self) -> [&Vec<T>; 6] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.conv3_w,
            &self.conv3_b,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Vec<T>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.conv3_w,
            &mut self.conv3_b,
        ]
    }
}

/// Deterministic `N(0, 1/fan_in)` kernel init with zero biases; kernels are
/// filled layer by layer from a single stream seeded by `seed`.
pub fn init_denoiser<T: Real>(seed: u64, channels: usize) -> DenoiserWeights<T> {
    let mut rng = DetRng::new(seed);
    let mut sample = |count: usize, fan_in: usize| -> Vec<T> {
        let std = (1.0 / fan_in as f64).sqrt();
        (0..count).map(|_| T::of(rng.next_normal() * std)).collect()
    };
    DenoiserWeights {
        channels,
        conv1_w: sample(9 * channels * HIDDEN, 9 * channels),
        conv1_b: vec![T::zero(); HIDDEN],
        conv2_w: sample(9 * HIDDEN * HIDDEN, 9 * HIDDEN),
        conv2_b: vec![T::zero(); HIDDEN],
        conv3_w: sample(9 * HIDDEN * channels, 9 * HIDDEN),
        conv3_b: vec![T::zero(); channels],
    }
}

struct ImageCache<T> {
    input: Vec<T>,
    a1: Vec<T>, // tanh(conv1)
    a2: Vec<T>, // tanh(conv2)
    h: usize,
    w: usize,
}

/// Per-batch activations needed by [`denoise_backward`].
pub struct DenoiseCache<T> {
    images: Vec<ImageCache<T>>,
    channels: usize,
}

/// Run the denoiser over a batch; returns outputs plus the activation cache.
pub fn denoise_forward<T: Real>(
    weights: &DenoiserWeights<T>,
    batch: &[ImageTensor<T>],
) -> Result<(Vec<ImageTensor<T>>, DenoiseCache<T>)> {
    let c = weights.channels;
    let mut outputs = Vec::with_capacity(batch.len());
    let mut images = Vec::with_capacity(batch.len());
    for img in batch {
        if img.channels() != c {
            return Err(Error::Shape(format!(
                "denoiser expects {c} channels, image has {}",
                img.channels()
            )));
        }
        let (h, w) = (img.height(), img.width());
        let mut a1 = vec![T::zero(); h * w * HIDDEN];
        conv::conv3x3_forward(
            img.as_slice(),
            h,
            w,
            c,
            HIDDEN,
            &weights.conv1_w,
            Some(&weights.conv1_b),
            &mut a1,
        );
        conv::tanh_forward(&mut a1);
        let mut a2 = vec![T::zero(); h * w * HIDDEN];
        conv::conv3x3_forward(
            &a1,
            h,
            w,
            HIDDEN,
            HIDDEN,
            &weights.conv2_w,
            Some(&weights.conv2_b),
            &mut a2,
        );
        conv::tanh_forward(&mut a2);
        let mut residual = vec![T::zero(); h * w * c];
        conv::conv3x3_forward(
            &a2,
            h,
            w,
            HIDDEN,
            c,
            &weights.conv3_w,
            Some(&weights.conv3_b),
            &mut residual,
        );
        let out: Vec<T> = img
            .as_slice()
            .iter()
            .zip(&residual)
            .map(|(&x, &r)| x - r)
            .collect();
        outputs.push(ImageTensor::new(h, w, c, out)?);
        images.push(ImageCache {
            input: img.as_slice().to_vec(),
            a1,
            a2,
            h,
            w,
        });
    }
    Ok((
        outputs,
        DenoiseCache {
            images,
            channels: c,
        },
    ))
}

/// Exact weight gradients of the forward map; accumulates additively over
/// batch items and is linear in `dl_dout`.
pub fn denoise_backward<T: Real>(
    weights: &DenoiserWeights<T>,
    cache: &DenoiseCache<T>,
    dl_dout: &[ImageTensor<T>],
) -> Result<DenoiserGrads<T>> {
    let c = cache.channels;
    if dl_dout.len() != cache.images.len() {
        return Err(Error::Shape(format!(
            "cache holds {} images, gradient batch has {}",
            cache.images.len(),
            dl_dout.len()
        )));
    }
    let mut grads = DenoiserGrads::zeros(c);
    for (entry, g_out) in cache.images.iter().zip(dl_dout) {
        let (h, w) = (entry.h, entry.w);
        if g_out.height() != h || g_out.width() != w || g_out.channels() != c {
            return Err(Error::Shape("gradient dims do not match cached forward".into()));
        }
        // out = input − residual  =>  dL/dresidual = −dL/dout
        let g_res: Vec<T> = g_out.as_slice().iter().map(|&g| -g).collect();

        conv::conv3x3_backward_params(
            &entry.a2,
            &g_res,
            h,
            w,
            HIDDEN,
            c,
            &mut grads.conv3_w,
            Some(&mut grads.conv3_b),
        );
        let mut g_a2 = vec![T::zero(); h * w * HIDDEN];
        conv::conv3x3_backward_input(&g_res, h, w, HIDDEN, c, &weights.conv3_w, &mut g_a2);
        conv::tanh_backward(&entry.a2, &mut g_a2);

        conv::conv3x3_backward_params(
            &entry.a1,
            &g_a2,
            h,
            w,
            HIDDEN,
            HIDDEN,
            &mut grads.conv2_w,
            Some(&mut grads.conv2_b),
        );
        let mut g_a1 = vec![T::zero(); h * w * HIDDEN];
        conv::conv3x3_backward_input(&g_a2, h, w, HIDDEN, HIDDEN, &weights.conv2_w, &mut g_a1);
        conv::tanh_backward(&entry.a1, &mut g_a1);

        conv::conv3x3_backward_params(
            &entry.input,
            &g_a1,
            h,
            w,
            c,
            HIDDEN,
            &mut grads.conv1_w,
            Some(&mut grads.conv1_b),
        );
    }
    Ok(grads)
}
