//! Checkpoints: a directory of tensor files plus a `key = value` manifest.
//!
//! ```text
//! checkpoint/
//!   manifest.txt        channels, seeds, tensor file list
//!   conv1_w.d2t ...     rank-4 kernels / rank-1 biases
//! ```

use std::path::Path;

use crate::denoiser::{DenoiserWeights, HIDDEN};
use crate::error::{Error, Result};
use crate::io;

pub const CHECKPOINT_MANIFEST: &str = "manifest.txt";

const TENSOR_NAMES: [&str; 6] = [
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b",
];

/// Everything needed to re-run evaluation: weights plus the seeds that
/// reproduce the frozen extractor.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub weights: DenoiserWeights<f32>,
    pub seed_model: u64,
    pub seed_extractor: u64,
}

pub fn save_checkpoint(
    dir: &Path,
    weights: &DenoiserWeights<f32>,
    seed_model: u64,
    seed_extractor: u64,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let c = weights.channels() as u32;
    let h = HIDDEN as u32;
    let dims: [(&str, Vec<u32>, &Vec<f32>); 6] = [
        ("conv1_w", vec![3, 3, c, h], &weights.conv1_w),
        ("conv1_b", vec![h], &weights.conv1_b),
        ("conv2_w", vec![3, 3, h, h], &weights.conv2_w),
        ("conv2_b", vec![h], &weights.conv2_b),
        ("conv3_w", vec![3, 3, h, c], &weights.conv3_w),
        ("conv3_b", vec![c], &weights.conv3_b),
    ];
    let mut manifest = String::new();
    manifest.push_str(&format!("channels = {}\n", weights.channels()));
    manifest.push_str(&format!("seed_model = {seed_model}\n"));
    manifest.push_str(&format!("seed_extractor = {seed_extractor}\n"));
    manifest.push_str("\n[tensors]\n");
    for (name, shape, data) in dims {
        let file = format!("{name}.d2t");
        io::write_raw(&dir.join(&file), &shape, data)?;
        manifest.push_str(&format!("{name} {file}\n"));
    }
    let path = dir.join(CHECKPOINT_MANIFEST);
    std::fs::write(&path, manifest).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest_path = dir.join(CHECKPOINT_MANIFEST);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut channels = None;
    let mut seed_model = None;
    let mut seed_extractor = None;
    let mut files: Vec<(String, String)> = Vec::new();
    let mut in_tensors = false;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "[tensors]" {
            in_tensors = true;
            continue;
        }
        if in_tensors {
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some(name), Some(file)) => files.push((name.to_string(), file.to_string())),
                _ => return Err(Error::Format("checkpoint manifest: bad tensor line".into())),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format("checkpoint manifest: expected key = value".into()))?;
        match (key.trim(), value.trim()) {
            ("channels", v) => channels = v.parse().ok(),
            ("seed_model", v) => seed_model = v.parse().ok(),
            ("seed_extractor", v) => seed_extractor = v.parse().ok(),
            (other, _) => {
                return Err(Error::Format(format!(
                    "checkpoint manifest: unknown key `{other}`"
                )))
            }
        }
    }
    let channels: usize =
        channels.ok_or_else(|| Error::Format("checkpoint manifest missing channels".into()))?;
    let seed_model =
        seed_model.ok_or_else(|| Error::Format("checkpoint manifest missing seed_model".into()))?;
    let seed_extractor = seed_extractor
        .ok_or_else(|| Error::Format("checkpoint manifest missing seed_extractor".into()))?;

    let mut weights = DenoiserWeights::<f32>::zeros(channels);
    for name in TENSOR_NAMES {
        let file = files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f.clone())
            .ok_or_else(|| Error::Format(format!("checkpoint manifest missing tensor {name}")))?;
        let raw = io::read_raw(&dir.join(&file))?;
        let target: &mut Vec<f32> = match name {
            "conv1_w" => &mut weights.conv1_w,
            "conv1_b" => &mut weights.conv1_b,
            "conv2_w" => &mut weights.conv2_w,
            "conv2_b" => &mut weights.conv2_b,
            "conv3_w" => &mut weights.conv3_w,
            _ => &mut weights.conv3_b,
        };
        if raw.data.len() != target.len() {
            return Err(Error::Length(format!(
                "checkpoint tensor {name}: {} values, expected {}",
                raw.data.len(),
                target.len()
            )));
        }
        *target = raw.data;
    }
    Ok(Checkpoint {
        weights,
        seed_model,
        seed_extractor,
    })
}
