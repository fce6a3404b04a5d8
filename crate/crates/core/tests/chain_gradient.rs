//! End-to-end gradient check: the assembled step gradient (pixel loss +
//! divergence → extractor → patch scatter → denoiser backward) against
//! central finite differences of the assembled loss, on a 2-image 8×8
//! instance in patch mode.

use d2sm::dataset::generate_dataset;
use d2sm::denoiser::{init_denoiser, DenoiserWeights};
use d2sm::extractor::init_extractor;
use d2sm::num::Real;
use d2sm::patches::{patch_grid, PatchSpec};
use d2sm::tensor::ImageTensor;
use d2sm::train::{step_loss_and_grads, TrainConfig, TrainMode};

fn chain_config() -> TrainConfig {
    let mut cfg = TrainConfig::new("unused".into(), "unused".into());
    cfg.mode = TrainMode::Patch;
    cfg.patch_size = 4;
    cfg.stride = 2;
    cfg.w_pixel = 1.0;
    cfg.lambda = 0.1;
    cfg.use_queue = Some(false);
    cfg
}

fn test_pairs<T: Real>() -> (Vec<ImageTensor<T>>, Vec<ImageTensor<T>>) {
    let dir = std::env::temp_dir().join(format!("d2sm-chain-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let manifest = generate_dataset(2, (8, 8, 1), 3, 0.1, 21, &dir).unwrap();
    let pairs = manifest.load_pairs(&dir).unwrap();
    let clean = pairs.iter().map(|(c, _)| c.cast::<T>()).collect();
    let noisy = pairs.iter().map(|(_, n)| n.cast::<T>()).collect();
    (clean, noisy)
}

fn total_loss(
    cfg: &TrainConfig,
    weights: &DenoiserWeights<f64>,
    extractor: &d2sm::extractor::ExtractorWeights<f64>,
    noisy: &[ImageTensor<f64>],
    clean: &[ImageTensor<f64>],
    grid: &d2sm::PatchGrid,
) -> f64 {
    let (pixel, d2sm_term, _) =
        step_loss_and_grads(cfg, weights, extractor, noisy, clean, Some(grid), &mut None).unwrap();
    cfg.w_pixel * pixel + cfg.lambda * d2sm_term
}

/// FD over a spread of coordinates in every weight tensor, error relative
/// to the largest gradient component. The analytic gradient under test runs
/// at precision `T`; the FD oracle differences the identical function (the
/// `T` weights widened exactly to f64) at double precision, so f32 FD noise
/// and pixel-loss kinks inside a wide bracket do not contaminate the check.
fn chain_max_rel_err<T: Real>(h: f64) -> f64 {
    let cfg = chain_config();
    let (clean, noisy) = test_pairs::<T>();
    let grid = patch_grid(8, 8, PatchSpec::new(4, 2).unwrap()).unwrap();
    let extractor = init_extractor::<T>(3, 1);
    let weights = init_denoiser::<T>(11, 1);

    let (pixel, d2sm_term, grads) = step_loss_and_grads(
        &cfg,
        &weights,
        &extractor,
        &noisy,
        &clean,
        Some(&grid),
        &mut None,
    )
    .unwrap();
    assert!(pixel.to_double() > 0.0 && d2sm_term.to_double() > 0.0);

    // step gradients already carry the loss weights
    let analytic: Vec<Vec<f64>> = grads
        .params()
        .iter()
        .map(|t| t.iter().map(|&g| g.to_double()).collect())
        .collect();
    let scale = analytic
        .iter()
        .flat_map(|t| t.iter())
        .fold(1e-12f64, |m, &g| m.max(g.abs()));

    let mut weights64 = weights.cast::<f64>();
    let extractor64 = extractor.cast::<f64>();
    let clean64: Vec<ImageTensor<f64>> = clean.iter().map(|i| i.cast()).collect();
    let noisy64: Vec<ImageTensor<f64>> = noisy.iter().map(|i| i.cast()).collect();

    let mut max_abs = 0.0f64;
    for t in 0..6 {
        let len = analytic[t].len();
        let stride = (len / 9).max(1);
        for i in (0..len).step_by(stride) {
            let orig = weights64.params()[t][i];
            weights64.params_mut()[t][i] = orig + h;
            let plus = total_loss(&cfg, &weights64, &extractor64, &noisy64, &clean64, &grid);
            weights64.params_mut()[t][i] = orig - h;
            let minus = total_loss(&cfg, &weights64, &extractor64, &noisy64, &clean64, &grid);
            weights64.params_mut()[t][i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            max_abs = max_abs.max((analytic[t][i] - fd).abs());
        }
    }
    max_abs / scale
}

#[test]
fn assembled_gradient_matches_finite_differences_double_precision() {
    let err = chain_max_rel_err::<f64>(1e-5);
    println!("full-chain double-precision error: {err:e}");
    assert!(err <= 1e-5, "max relative error {err}");
}

#[test]
fn assembled_gradient_matches_finite_differences_single_precision() {
    let err = chain_max_rel_err::<f32>(1e-5);
    println!("full-chain single-precision error: {err:e}");
    assert!(err <= 1e-3, "max relative error {err}");
}
