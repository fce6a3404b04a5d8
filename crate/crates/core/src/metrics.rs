//! Pixel-space quality metrics. Inputs may be any precision; accumulation
//! is always in f64. Both metrics are computed on raw (unclipped) values.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::tensor::ImageTensor;

/// SSIM window edge in pixels.
const SSIM_WINDOW: usize = 8;
/// SSIM window stride in pixels.
const SSIM_STRIDE: usize = 4;

fn check_dims<T: Real>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

/// Mean squared error in f64.
pub fn mse<T: Real>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| {
            let d = x.to_double() - y.to_double();
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Peak signal-to-noise ratio in dB: `10·log10(peak²/MSE)`.
///
/// Identical images have zero MSE; the documented sentinel for that case is
/// `f64::INFINITY`.
pub fn psnr<T: Real>(a: &ImageTensor<T>, b: &ImageTensor<T>, peak: f64) -> Result<f64> {
    if peak <= 0.0 {
        return Err(Error::Invalid(format!("peak must be positive, got {peak}")));
    }
    let err = mse(a, b)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / err).log10())
}

/// Structural similarity with uniform 8×8 windows at stride 4, constants
/// `C1 = (0.01·peak)²`, `C2 = (0.03·peak)²` at peak 1, averaged over
/// windows and channels. Symmetric in its arguments; equals 1 when `a == b`.
pub fn ssim<T: Real>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<f64> {
    check_dims(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Invalid(format!(
            "image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window"
        )));
    }
    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let count = (SSIM_WINDOW * SSIM_WINDOW) as f64;

    let mut total = 0.0f64;
    let mut windows = 0usize;
    let mut r = 0;
    while r + SSIM_WINDOW <= h {
        let mut c = 0;
        while c + SSIM_WINDOW <= w {
            for ch in 0..a.channels() {
                let mut sum_a = 0.0;
                let mut sum_b = 0.0;
                let mut sum_aa = 0.0;
                let mut sum_bb = 0.0;
                let mut sum_ab = 0.0;
                for dr in 0..SSIM_WINDOW {
                    for dc in 0..SSIM_WINDOW {
                        let x = a.get(r + dr, c + dc, ch).to_double();
                        let y = b.get(r + dr, c + dc, ch).to_double();
                        sum_a += x;
                        sum_b += y;
                        sum_aa += x * x;
                        sum_bb += y * y;
                        sum_ab += x * y;
                    }
                }
                let mu_a = sum_a / count;
                let mu_b = sum_b / count;
                let var_a = sum_aa / count - mu_a * mu_a;
                let var_b = sum_bb / count - mu_b * mu_b;
                let cov = sum_ab / count - mu_a * mu_b;
                total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                windows += 1;
            }
            c += SSIM_STRIDE;
        }
        r += SSIM_STRIDE;
    }
    Ok(total / windows as f64)
}
