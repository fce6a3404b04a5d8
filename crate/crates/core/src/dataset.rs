//! Synthetic dataset generation.
//!
//! Each clean image is a 2×2 grid of regions, each region filled by one of
//! `M` sinusoidal-grating generators (class `m` has orientation `m·π/M` and
//! spatial frequency `m + 1` against a fixed 16-pixel base period). Region
//! classes are chosen by a per-image seeded stream, so one image mixes
//! several internally coherent textures. The degraded copy adds i.i.d.
//! Gaussian noise of standard deviation `sigma` per element, unclipped, so
//! the degradation stays exactly Gaussian.
//!
//! The manifest is a UTF-8 `key = value` file followed by an ordered file
//! list section:
//!
//! ```text
//! count = 4
//! height = 32
//! width = 32
//! channels = 1
//! classes = 4
//! sigma = 0.1
//! seed = 7
//!
//! [files]
//! clean_00000.d2t noisy_00000.d2t
//! ...
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::io;
use crate::rng::DetRng;
use crate::tensor::ImageTensor;

pub const MANIFEST_NAME: &str = "manifest.txt";

/// Base period of the class-0 grating, in pixels. Class m runs at
/// frequency m+1 against this, so higher classes approach checkerboard
/// scale and denoising cannot trivially saturate.
const BASE_PERIOD: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
    pub sigma: f64,
    pub seed: u64,
    /// `(clean, noisy)` file names, relative to the manifest's directory.
    pub items: Vec<(String, String)>,
}

impl DatasetManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        text.push_str(&format!("count = {}\n", self.count));
        text.push_str(&format!("height = {}\n", self.height));
        text.push_str(&format!("width = {}\n", self.width));
        text.push_str(&format!("channels = {}\n", self.channels));
        text.push_str(&format!("classes = {}\n", self.classes));
        text.push_str(&format!("sigma = {}\n", self.sigma));
        text.push_str(&format!("seed = {}\n", self.seed));
        text.push_str("\n[files]\n");
        for (clean, noisy) in &self.items {
            text.push_str(&format!("{clean} {noisy}\n"));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut count = None;
        let mut height = None;
        let mut width = None;
        let mut channels = None;
        let mut classes = None;
        let mut sigma = None;
        let mut seed = None;
        let mut items = Vec::new();
        let mut in_files = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[files]" {
                in_files = true;
                continue;
            }
            if in_files {
                let mut parts = line.split_whitespace();
                let (clean, noisy) = (parts.next(), parts.next());
                match (clean, noisy, parts.next()) {
                    (Some(c), Some(n), None) => items.push((c.to_string(), n.to_string())),
                    _ => {
                        return Err(Error::Format(format!(
                            "{}:{}: expected `clean noisy` pair",
                            path.display(),
                            lineno + 1
                        )))
                    }
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("{}:{}: expected key = value", path.display(), lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                Error::Format(format!(
                    "{}:{}: bad {what} value `{value}`",
                    path.display(),
                    lineno + 1
                ))
            };
            match key {
                "count" => count = Some(value.parse().map_err(|_| bad("count"))?),
                "height" => height = Some(value.parse().map_err(|_| bad("height"))?),
                "width" => width = Some(value.parse().map_err(|_| bad("width"))?),
                "channels" => channels = Some(value.parse().map_err(|_| bad("channels"))?),
                "classes" => classes = Some(value.parse().map_err(|_| bad("classes"))?),
                "sigma" => sigma = Some(value.parse().map_err(|_| bad("sigma"))?),
                "seed" => seed = Some(value.parse().map_err(|_| bad("seed"))?),
                other => {
                    return Err(Error::Format(format!(
                        "{}:{}: unknown key `{other}`",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        let manifest = DatasetManifest {
            count: count.ok_or_else(|| Error::Format("manifest missing count".into()))?,
            height: height.ok_or_else(|| Error::Format("manifest missing height".into()))?,
            width: width.ok_or_else(|| Error::Format("manifest missing width".into()))?,
            channels: channels.ok_or_else(|| Error::Format("manifest missing channels".into()))?,
            classes: classes.ok_or_else(|| Error::Format("manifest missing classes".into()))?,
            sigma: sigma.ok_or_else(|| Error::Format("manifest missing sigma".into()))?,
            seed: seed.ok_or_else(|| Error::Format("manifest missing seed".into()))?,
            items,
        };
        if manifest.items.len() != manifest.count {
            return Err(Error::Length(format!(
                "{}: manifest declares {} items but lists {}",
                path.display(),
                manifest.count,
                manifest.items.len()
            )));
        }
        Ok(manifest)
    }

    /// Load every `(clean, noisy)` pair, validating dims against the header.
    pub fn load_pairs(&self, dir: &Path) -> Result<Vec<(ImageTensor<f32>, ImageTensor<f32>)>> {
        let mut pairs = Vec::with_capacity(self.items.len());
        for (clean_name, noisy_name) in &self.items {
            let clean = io::read_image::<f32>(&dir.join(clean_name))?;
            let noisy = io::read_image::<f32>(&dir.join(noisy_name))?;
            for (img, name) in [(&clean, clean_name), (&noisy, noisy_name)] {
                if img.height() != self.height
                    || img.width() != self.width
                    || img.channels() != self.channels
                {
                    return Err(Error::Shape(format!(
                        "{name}: dims {}x{}x{} do not match manifest {}x{}x{}",
                        img.height(),
                        img.width(),
                        img.channels(),
                        self.height,
                        self.width,
                        self.channels
                    )));
                }
            }
            pairs.push((clean, noisy));
        }
        Ok(pairs)
    }
}

/// Grating value for texture class `m` of `classes` at region-local
/// coordinates, in `[0, 1]`.
fn texture_value(m: usize, classes: usize, row: usize, col: usize, ch: usize, channels: usize) -> f64 {
    let theta = m as f64 * std::f64::consts::PI / classes as f64;
    let freq = (m + 1) as f64;
    let phase = 2.0 * std::f64::consts::PI * ch as f64 / channels as f64;
    let along = col as f64 * theta.cos() + row as f64 * theta.sin();
    0.5 + 0.5 * (2.0 * std::f64::consts::PI * freq * along / BASE_PERIOD + phase).sin()
}

/// Deterministic clean image `index` of a dataset: a 2×2 grid of textured
/// regions with classes drawn from the image's derived stream.
fn clean_image(
    index: usize,
    height: usize,
    width: usize,
    channels: usize,
    classes: usize,
    seed: u64,
) -> ImageTensor<f32> {
    let mut class_rng = DetRng::derive(seed, 2 * index as u64);
    let region_classes: Vec<usize> = (0..4).map(|_| class_rng.next_index(classes)).collect();
    let (half_h, half_w) = (height / 2, width / 2);
    let mut img = ImageTensor::<f32>::zeros(height, width, channels);
    for r in 0..height {
        for c in 0..width {
            let region = usize::from(r >= half_h) * 2 + usize::from(c >= half_w);
            let (r0, c0) = (
                if r >= half_h { half_h } else { 0 },
                if c >= half_w { half_w } else { 0 },
            );
            for ch in 0..channels {
                let v = texture_value(region_classes[region], classes, r - r0, c - c0, ch, channels);
                img.set(r, c, ch, v as f32);
            }
        }
    }
    img
}

/// Generate `count` clean/noisy pairs plus a manifest into `out_dir`.
///
/// Byte-identical output for identical arguments: per-image streams are
/// derived from `(seed, index)`, classes from stream `2·index`, noise from
/// stream `2·index + 1`. Noise is added in f64 and stored at f32.
pub fn generate_dataset(
    count: usize,
    size: (usize, usize, usize),
    classes: usize,
    sigma: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let (height, width, channels) = size;
    if count < 1 {
        return Err(Error::Invalid("count must be at least 1".into()));
    }
    if height < 8 || width < 8 {
        return Err(Error::Invalid(format!(
            "images must be at least 8x8, got {height}x{width}"
        )));
    }
    if channels < 1 {
        return Err(Error::Invalid("channels must be at least 1".into()));
    }
    if classes < 2 {
        return Err(Error::Invalid("need at least 2 texture classes".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut items = Vec::with_capacity(count);
    for index in 0..count {
        let clean = clean_image(index, height, width, channels, classes, seed);
        let mut noise_rng = DetRng::derive(seed, 2 * index as u64 + 1);
        let noisy_data: Vec<f32> = clean
            .as_slice()
            .iter()
            .map(|&v| (v as f64 + sigma * noise_rng.next_normal()) as f32)
            .collect();
        let noisy = ImageTensor::new(height, width, channels, noisy_data)?;

        let clean_name = format!("clean_{index:05}.d2t");
        let noisy_name = format!("noisy_{index:05}.d2t");
        io::write_image(&out_dir.join(&clean_name), &clean)?;
        io::write_image(&out_dir.join(&noisy_name), &noisy)?;
        items.push((clean_name, noisy_name));
    }

    let manifest = DatasetManifest {
        count,
        height,
        width,
        channels,
        classes,
        sigma,
        seed,
        items,
    };
    manifest.write(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}
