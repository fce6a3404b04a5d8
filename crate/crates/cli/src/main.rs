//! `d2sm` command-line tool: dataset generation, feature extraction,
//! divergence evaluation, gradient verification, training, and evaluation.
//!
//! Conventions: JSON results go to stdout, bulk artifacts to `--out` paths;
//! all randomness flows from explicit seed flags; usage errors exit 2,
//! validation/runtime errors print a single `error: ...` line to stderr and
//! exit 1.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use d2sm::dataset::generate_dataset;
use d2sm::divergence::{divergence_with_grad, DivergenceVariant, LiveMask};
use d2sm::extractor::{extract_features, init_extractor};
use d2sm::io::{read_tensor, write_features, LoadedTensor};
use d2sm::rng::DetRng;
use d2sm::tensor::{FeatureBatch, Origin};
use d2sm::train::{evaluate, train, TrainConfig, TrainMode};
use d2sm::{extract_patches, patch_grid, PatchSpec, Real};

#[derive(Parser)]
#[command(
    name = "d2sm",
    version,
    about = "Distribution-matching denoising toolkit",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic texture-grid dataset (train and eval splits).
    GenData(GenDataArgs),
    /// Extract whole-image features for every pair listed in a manifest.
    Extract(ExtractArgs),
    /// Divergence between two tensors (features directly, or images via
    /// patch features).
    Divergence(DivergenceArgs),
    /// Verify analytic divergence gradients against finite differences.
    GradCheck(GradCheckArgs),
    /// Train a denoiser from a config file.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Number of training image pairs.
    #[arg(long)]
    count: usize,
    /// Number of held-out image pairs (0 = no eval split).
    #[arg(long, default_value_t = 0)]
    eval_count: usize,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Number of texture classes.
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Gaussian noise standard deviation (image-value units).
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    seed: u64,
    /// Output dataset root; splits land in `<out>/train` and `<out>/eval`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Dataset manifest of the split to featurize.
    #[arg(long)]
    manifest: PathBuf,
    /// Extractor seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for clean_features.d2t / noisy_features.d2t.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DivergenceArgs {
    /// First tensor file (restored side).
    #[arg(long)]
    a: PathBuf,
    /// Second tensor file (clear side).
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    variant: String,
    /// Patch window for image inputs; rank-3 files require this.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Patch stride for image inputs (defaults to the window size).
    #[arg(long)]
    stride: Option<usize>,
    /// Extractor seed for image inputs.
    #[arg(long, default_value_t = 0)]
    extractor_seed: u64,
}

#[derive(Args)]
struct GradCheckArgs {
    /// Number of feature rows.
    #[arg(long)]
    n: usize,
    /// Feature dimension.
    #[arg(long)]
    d: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    variant: String,
    /// Pipeline precision to test: f32 or f64.
    #[arg(long, default_value = "f64")]
    precision: String,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config file (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's patch window.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Override the config's patch stride.
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset manifest of the split to evaluate.
    #[arg(long)]
    data: PathBuf,
    /// Feature-KL estimation mode: patch or batch.
    #[arg(long, default_value = "patch")]
    mode: String,
    #[arg(long, default_value_t = 16)]
    patch_size: usize,
    #[arg(long, default_value_t = 8)]
    stride: usize,
}

fn json_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        // JSON has no Inf/NaN; the PSNR sentinel serializes as null
        "null".to_string()
    }
}

fn run(cli: Cli) -> d2sm::Result<()> {
    match cli.command {
        Command::GenData(args) => {
            let size = (args.height, args.width, args.channels);
            let train_dir = args.out.join(d2sm::train::TRAIN_SPLIT);
            generate_dataset(args.count, size, args.classes, args.sigma, args.seed, &train_dir)?;
            if args.eval_count > 0 {
                // decorrelate the eval stream from every per-image train stream
                let eval_seed = DetRng::derive(args.seed, u64::MAX).next_u64();
                let eval_dir = args.out.join(d2sm::train::EVAL_SPLIT);
                generate_dataset(args.eval_count, size, args.classes, args.sigma, eval_seed, &eval_dir)?;
            }
            println!(
                "{{\"train\":{},\"eval\":{},\"out\":{:?}}}",
                args.count,
                args.eval_count,
                args.out.display().to_string()
            );
            Ok(())
        }
        Command::Extract(args) => {
            let manifest = d2sm::dataset::DatasetManifest::load(&args.manifest)?;
            let dir = args
                .manifest
                .parent()
                .ok_or_else(|| d2sm::Error::Invalid("manifest path has no parent".into()))?;
            let pairs = manifest.load_pairs(dir)?;
            let weights = init_extractor::<f32>(args.seed, manifest.channels);
            let clean: Vec<_> = pairs.iter().map(|(c, _)| c.clone()).collect();
            let noisy: Vec<_> = pairs.iter().map(|(_, n)| n.clone()).collect();
            let f_clean = extract_features(&weights, &clean)?;
            let f_noisy = extract_features(&weights, &noisy)?;
            std::fs::create_dir_all(&args.out)
                .map_err(|e| d2sm::Error::Io { path: args.out.clone(), source: e })?;
            write_features(&args.out.join("clean_features.d2t"), &f_clean)?;
            write_features(&args.out.join("noisy_features.d2t"), &f_noisy)?;
            println!(
                "{{\"count\":{},\"dim\":{},\"out\":{:?}}}",
                f_clean.n(),
                f_clean.dim(),
                args.out.display().to_string()
            );
            Ok(())
        }
        Command::Divergence(args) => {
            let variant: DivergenceVariant = args.variant.parse()?;
            let fa = load_side(&args, &args.a, Origin::Restored)?;
            let fb = load_side(&args, &args.b, Origin::Clear)?;
            let res = divergence_with_grad(&fa, &fb, variant, &LiveMask::all_live(fa.n()))?;
            println!(
                "{{\"variant\":\"{}\",\"n\":{},\"value\":{}}}",
                variant,
                fa.n(),
                json_number(res.value as f64)
            );
            Ok(())
        }
        Command::GradCheck(args) => {
            let variant: DivergenceVariant = args.variant.parse()?;
            let (max_rel_err, threshold) = match args.precision.as_str() {
                "f64" => (grad_check_max_rel_err::<f64>(args.n, args.d, args.seed, variant)?, 1e-5),
                "f32" => (grad_check_max_rel_err::<f32>(args.n, args.d, args.seed, variant)?, 1e-3),
                other => {
                    return Err(d2sm::Error::Invalid(format!(
                        "unknown precision `{other}` (expected f32 or f64)"
                    )))
                }
            };
            println!(
                "{{\"variant\":\"{}\",\"n\":{},\"d\":{},\"precision\":\"{}\",\"max_rel_err\":{}}}",
                variant,
                args.n,
                args.d,
                args.precision,
                json_number(max_rel_err)
            );
            if max_rel_err > threshold {
                return Err(d2sm::Error::Invalid(format!(
                    "gradient check failed: max_rel_err {max_rel_err:e} exceeds {threshold:e}"
                )));
            }
            Ok(())
        }
        Command::Train(args) => {
            let mut cfg = TrainConfig::from_file(&args.config)?;
            if let Some(k) = args.patch_size {
                cfg.patch_size = k;
            }
            if let Some(s) = args.stride {
                cfg.stride = s;
            }
            let report = train(&cfg)?;
            println!(
                "{{\"steps\":{},\"checkpoint\":{:?},\"metrics\":{:?},\"psnr\":{},\"ssim\":{},\"feature_kl\":{}}}",
                report.records.len(),
                report.checkpoint_dir.display().to_string(),
                report.metrics_path.display().to_string(),
                json_number(report.final_eval.psnr),
                json_number(report.final_eval.ssim),
                json_number(report.final_eval.feature_kl)
            );
            Ok(())
        }
        Command::Eval(args) => {
            let mode: TrainMode = args.mode.parse()?;
            let patch = PatchSpec::new(args.patch_size, args.stride)?;
            let res = evaluate(&args.checkpoint, &args.data, mode, patch)?;
            println!(
                "{{\"count\":{},\"psnr\":{},\"ssim\":{},\"feature_kl\":{}}}",
                res.count,
                json_number(res.psnr),
                json_number(res.ssim),
                json_number(res.feature_kl)
            );
            Ok(())
        }
    }
}

/// Load one side of a divergence comparison: rank-2 files are features as
/// stored; rank-3 images go through the sliding window and the extractor.
fn load_side(
    args: &DivergenceArgs,
    path: &PathBuf,
    origin: Origin,
) -> d2sm::Result<FeatureBatch<f32>> {
    match read_tensor::<f32>(path)? {
        LoadedTensor::Features(fb) => Ok(fb.with_origin(origin)),
        LoadedTensor::Image(img) => {
            let k = args.patch_size.ok_or_else(|| {
                d2sm::Error::Invalid(format!(
                    "{} is an image; pass --patch-size to compare via patch features",
                    path.display()
                ))
            })?;
            let spec = PatchSpec::new(k, args.stride.unwrap_or(k))?;
            let grid = patch_grid(img.height(), img.width(), spec)?;
            let patches = extract_patches(&img, &grid, k)?;
            let weights = init_extractor::<f32>(args.extractor_seed, img.channels());
            Ok(extract_features(&weights, &patches)?.with_origin(origin))
        }
    }
}

/// Analytic gradient vs central finite differences on a seeded random
/// instance, at the pipeline precision `T`. The FD oracle differences the
/// same pipeline; the error is reported relative to the largest gradient
/// component.
fn grad_check_max_rel_err<T: Real>(
    n: usize,
    d: usize,
    seed: u64,
    variant: DivergenceVariant,
) -> d2sm::Result<f64> {
    if n < 2 || d == 0 {
        return Err(d2sm::Error::Invalid(
            "grad-check needs n >= 2 and d >= 1".into(),
        ));
    }
    let mut rng = DetRng::new(seed);
    let rows_x: Vec<f64> = (0..n * d).map(|_| rng.next_normal()).collect();
    let rows_y: Vec<f64> = (0..n * d).map(|_| rng.next_normal()).collect();
    let fy = FeatureBatch::new(n, d, rows_y.iter().map(|&v| T::of(v)).collect(), Origin::Clear)?;
    let live = LiveMask::all_live(n);

    let value_at = |rows: &[f64]| -> d2sm::Result<f64> {
        let fx = FeatureBatch::new(n, d, rows.iter().map(|&v| T::of(v)).collect(), Origin::Restored)?;
        Ok(divergence_with_grad(&fx, &fy, variant, &live)?.value.to_double())
    };

    let fx = FeatureBatch::new(n, d, rows_x.iter().map(|&v| T::of(v)).collect(), Origin::Restored)?;
    let analytic = divergence_with_grad(&fx, &fy, variant, &live)?.grad;

    let h = if std::mem::size_of::<T>() == 8 { 1e-5 } else { 3e-3 };
    let mut max_abs = 0.0f64;
    let mut scale = 1e-12f64;
    for i in 0..n * d {
        let mut plus = rows_x.clone();
        plus[i] += h;
        let mut minus = rows_x.clone();
        minus[i] -= h;
        let fd = (value_at(&plus)? - value_at(&minus)?) / (2.0 * h);
        let a = analytic.as_slice()[i].to_double();
        max_abs = max_abs.max((a - fd).abs());
        scale = scale.max(a.abs()).max(fd.abs());
    }
    Ok(max_abs / scale)
}

fn main() -> ExitCode {
    let cli = Cli::parse(); // usage errors exit 2 via clap
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
