//! Cosine-kernel similarity and conditional neighbor probabilities.
//!
//! For a feature batch `f_1..f_n`, the kernel matrix holds
//! `K[i][j] = ½(cos∠(f_i, f_j) + 1) ∈ [0, 1]`, a bandwidth-free similarity.
//! The conditional probability matrix normalizes each anchor's column:
//!
//! ```text
//! P[i][j] = g_{i|j} = K[i][j] / Σ_{k≠j} K[k][j]      (i ≠ j, P[j][j] = 0)
//! ```
//!
//! so column `j` is the distribution with which anchor `j` selects its
//! neighbors. Kernel values are floored at [`KERNEL_FLOOR`] before the
//! division, keeping every off-diagonal probability strictly positive even
//! for antipodal features.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::tensor::{FeatureBatch, Matrix};

/// Floor applied to kernel values before normalization.
pub const KERNEL_FLOOR: f64 = 1e-12;

/// Cosine kernel `½(a·b/(‖a‖‖b‖) + 1)`, clamped to `[0, 1]` against
/// floating-point spill. Zero-norm vectors are uninformative and map to 0.5;
/// [`kernel_matrix`] counts them in [`KernelMatrix::zero_norm_rows`].
pub fn cosine_kernel<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "cosine kernel needs equal dimensions");
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return T::of(0.5);
    }
    let cos = dot / (na.sqrt() * nb.sqrt());
    let half = T::of(0.5);
    (half * (cos + T::one())).max(T::zero()).min(T::one())
}

/// Symmetric n×n matrix of pairwise cosine-kernel similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix<T> {
    entries: Matrix<T>,
    /// Diagnostic: rows whose feature vector had zero norm.
    zero_norm_rows: usize,
}

impl<T: Real> KernelMatrix<T> {
    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries.get(i, j)
    }

    pub fn zero_norm_rows(&self) -> usize {
        self.zero_norm_rows
    }

    pub fn entries(&self) -> &Matrix<T> {
        &self.entries
    }
}

/// Pairwise kernel matrix of a feature batch; the upper triangle is
/// computed and mirrored, so symmetry is exact. Row norms are computed
/// once, not per pair.
pub fn kernel_matrix<T: Real>(features: &FeatureBatch<T>) -> Result<KernelMatrix<T>> {
    let n = features.n();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "kernel matrix needs at least 2 samples, got {n}"
        )));
    }
    let norms: Vec<T> = features
        .rows()
        .map(|row| row.iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect();
    let zero_norm_rows = norms.iter().filter(|&&v| v == T::zero()).count();
    let half = T::of(0.5);
    let mut entries = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = if norms[i] == T::zero() || norms[j] == T::zero() {
                half
            } else {
                let mut dot = T::zero();
                for (&x, &y) in features.row(i).iter().zip(features.row(j)) {
                    dot += x * y;
                }
                let cos = dot / (norms[i] * norms[j]);
                (half * (cos + T::one())).max(T::zero()).min(T::one())
            };
            entries.set(i, j, k);
            entries.set(j, i, k);
        }
    }
    Ok(KernelMatrix {
        entries,
        zero_norm_rows,
    })
}

/// Column-stochastic conditional probability matrix `g_{i|j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondProbMatrix<T> {
    entries: Matrix<T>,
    /// Per-column normalizers `Σ_{k≠j} max(K[k][j], floor)`.
    denoms: Vec<T>,
}

impl<T: Real> CondProbMatrix<T> {
    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    /// `g_{i|j}`: probability that anchor `j` selects neighbor `i`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries.get(i, j)
    }

    pub fn entries(&self) -> &Matrix<T> {
        &self.entries
    }

    pub(crate) fn denom(&self, j: usize) -> T {
        self.denoms[j]
    }
}

/// Normalize a kernel matrix into conditional neighbor probabilities,
/// flooring kernel values at [`KERNEL_FLOOR`] first. Column `j` sums to 1
/// over `i ≠ j`; the diagonal is exactly zero. Summation is index-ascending
/// for determinism.
pub fn cond_prob_matrix<T: Real>(kernel: &KernelMatrix<T>) -> CondProbMatrix<T> {
    let n = kernel.n();
    let floor = T::of(KERNEL_FLOOR);
    let mut entries = Matrix::zeros(n, n);
    let mut denoms = Vec::with_capacity(n);
    for j in 0..n {
        let mut denom = T::zero();
        for k in 0..n {
            if k != j {
                denom += kernel.get(k, j).max(floor);
            }
        }
        for i in 0..n {
            if i != j {
                entries.set(i, j, kernel.get(i, j).max(floor) / denom);
            }
        }
        denoms.push(denom);
    }
    CondProbMatrix { entries, denoms }
}
