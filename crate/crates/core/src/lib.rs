//! Distribution-matching objectives for image restoration.
//!
//! Pixel-wise losses compare a restored image to its target one sample at a
//! time. This crate instead matches the *distribution* of restored images to
//! the distribution of clear images in a fixed semantic feature space: the
//! conditional probability with which each sample selects its neighbors is
//! estimated with a bandwidth-free cosine kernel, and the KL divergence
//! between the restored-side and clear-side neighbor distributions is
//! minimized with exact analytic gradients.
//!
//! Two sampling strategies keep the estimate accurate at small batch sizes:
//!
//! * [`queue`] — paired FIFO queues hold detached feature rows from recent
//!   batches, so the estimate runs over far more samples than one batch
//!   while only the newest rows carry gradients;
//! * [`patches`] — sliding-window patches of a single image pair act as a
//!   batch of single-semantic samples (internal statistics).
//!
//! The remaining modules are a self-contained desk-scale harness around the
//! objective: a deterministic synthetic dataset, a frozen convolutional
//! feature extractor standing in for a pretrained network, a small residual
//! denoiser with manual backpropagation, Adam, metrics, and bit-exact file
//! formats. Everything numeric is generic over [`Real`] (`f32`/`f64`);
//! concrete aliases for both precisions are exported below.

pub mod checkpoint;
mod conv;
pub mod dataset;
pub mod denoiser;
pub mod divergence;
pub mod error;
pub mod extractor;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod num;
pub mod optim;
pub mod patches;
pub mod queue;
pub mod rng;
pub mod tensor;
pub mod train;

pub use divergence::{
    divergence_with_grad, kl_divergence, perceptual_mse, DivergenceResult, DivergenceVariant,
    LiveMask,
};
pub use error::{Error, Result};
pub use extractor::FEATURE_DIM;
pub use kernel::{cond_prob_matrix, cosine_kernel, kernel_matrix, KERNEL_FLOOR};
pub use num::Real;
pub use patches::{extract_patches, patch_grid, PatchGrid, PatchSpec};
pub use queue::new_queue_pair;
pub use tensor::Origin;
pub use train::{FeatureLoss, TrainMode};

/// Single-precision instantiations: the storage and training precision.
pub type ImageTensor32 = tensor::ImageTensor<f32>;
pub type FeatureBatch32 = tensor::FeatureBatch<f32>;
pub type Matrix32 = tensor::Matrix<f32>;
pub type KernelMatrix32 = kernel::KernelMatrix<f32>;
pub type CondProbMatrix32 = kernel::CondProbMatrix<f32>;
pub type FeatureQueuePair32 = queue::FeatureQueuePair<f32>;
pub type DivergenceResult32 = divergence::DivergenceResult<f32>;

/// Double-precision instantiations: the oracle and verification precision.
pub type ImageTensor64 = tensor::ImageTensor<f64>;
pub type FeatureBatch64 = tensor::FeatureBatch<f64>;
pub type Matrix64 = tensor::Matrix<f64>;
pub type KernelMatrix64 = kernel::KernelMatrix<f64>;
pub type CondProbMatrix64 = kernel::CondProbMatrix<f64>;
pub type FeatureQueuePair64 = queue::FeatureQueuePair<f64>;
pub type DivergenceResult64 = divergence::DivergenceResult<f64>;
