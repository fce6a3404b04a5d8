//! Distribution-matching objectives over feature batches.
//!
//! The objective compares the conditional neighbor distributions of the
//! restored-side features `Fx` and the clear-side features `Fy`:
//!
//! ```text
//! KL(P' ‖ P) = Σ_j Σ_{i≠j} g'_{i|j} · log( g'_{i|j} / g_{i|j} )
//! ```
//!
//! with `g'` from `Fx` and `g` from `Fy` (see [`crate::kernel`]). Three
//! variants are provided: forward KL weighted by the restored side, the
//! inverse KL weighted by the clear side, and their symmetric average
//!
//! ```text
//! JS(P' ‖ P) = ½ KL(P' ‖ P) + ½ KL(P ‖ P')
//! ```
//!
//! [`divergence_with_grad`] also returns the exact analytic derivative of
//! the value with respect to `Fx`, treating `Fy` as constant, with gradient
//! rows zeroed wherever the live mask marks a historic (constant) sample.
//! The derivative is a closed-form backward pass over the primitive chain
//! (per-entry divergence → column normalization → kernel floor → cosine
//! kernel); its binding contract is agreement with central finite
//! differences, which the test suite checks at both precisions.

use crate::error::{Error, Result};
use crate::kernel::{cond_prob_matrix, kernel_matrix, CondProbMatrix, KernelMatrix, KERNEL_FLOOR};
use crate::num::Real;
use crate::tensor::{FeatureBatch, Matrix};

/// Which divergence to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceVariant {
    /// Forward KL, weighted by the restored-side probabilities.
    Kl,
    /// Inverse KL, weighted by the clear-side probabilities.
    Ikl,
    /// Symmetric average of the two.
    Js,
}

impl DivergenceVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            DivergenceVariant::Kl => "kl",
            DivergenceVariant::Ikl => "ikl",
            DivergenceVariant::Js => "js",
        }
    }
}

impl std::str::FromStr for DivergenceVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(DivergenceVariant::Kl),
            "ikl" => Ok(DivergenceVariant::Ikl),
            "js" => Ok(DivergenceVariant::Js),
            other => Err(Error::Invalid(format!(
                "unknown divergence variant `{other}` (expected kl, ikl, or js)"
            ))),
        }
    }
}

impl std::fmt::Display for DivergenceVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Marks which rows of the restored-side batch carry gradients (the current
/// mini-batch) versus act as constants (historic queue entries).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveMask(Vec<bool>);

impl LiveMask {
    pub fn new(mask: Vec<bool>) -> Self {
        LiveMask(mask)
    }

    /// Every row live: the no-queue case.
    pub fn all_live(n: usize) -> Self {
        LiveMask(vec![true; n])
    }

    /// The newest `live` rows live, the remaining `n - live` historic.
    pub fn newest_live(live: usize, n: usize) -> Self {
        LiveMask((0..n).map(|i| i < live).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn is_live(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn live_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

/// Objective value plus its gradient with respect to the restored features.
#[derive(Debug, Clone)]
pub struct DivergenceResult<T> {
    /// Divergence value in nats; can round to a hair below zero because of
    /// the log clamp, never below `-1e-9` in practice.
    pub value: T,
    /// n×d gradient w.r.t. `Fx`; rows at non-live indices are exactly zero.
    pub grad: Matrix<T>,
    pub variant: DivergenceVariant,
}

#[inline]
fn clamped_ln<T: Real>(v: T, floor: T) -> T {
    v.max(floor).ln()
}

/// Forward KL between two conditional probability matrices, summed over all
/// ordered off-diagonal pairs in ascending `(anchor, neighbor)` order. Both
/// log arguments are clamped below at 1e-12.
pub fn kl_divergence<T: Real>(px: &CondProbMatrix<T>, py: &CondProbMatrix<T>) -> Result<T> {
    let n = px.n();
    if py.n() != n {
        return Err(Error::Shape(format!(
            "probability matrices are {n}x{n} and {0}x{0}",
            py.n()
        )));
    }
    let floor = T::of(KERNEL_FLOOR);
    let mut total = T::zero();
    for j in 0..n {
        for i in 0..n {
            if i != j {
                let p = px.get(i, j);
                let q = py.get(i, j);
                total += p * (clamped_ln(p, floor) - clamped_ln(q, floor));
            }
        }
    }
    Ok(total)
}

/// `∂KL(Px‖Py)/∂Px[i][j]` for the clamped objective.
fn kl_grad_wrt_first<T: Real>(px: &CondProbMatrix<T>, py: &CondProbMatrix<T>, scale: T) -> Matrix<T> {
    let n = px.n();
    let floor = T::of(KERNEL_FLOOR);
    let mut g = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if i != j {
                let p = px.get(i, j);
                let q = py.get(i, j);
                let mut d = clamped_ln(p, floor) - clamped_ln(q, floor);
                if p > floor {
                    d += T::one();
                }
                g.set(i, j, scale * d);
            }
        }
    }
    g
}

/// `∂KL(Py‖Px)/∂Px[i][j]` for the clamped objective (Px only appears inside
/// the log denominator).
fn ikl_grad_wrt_second<T: Real>(px: &CondProbMatrix<T>, py: &CondProbMatrix<T>, scale: T) -> Matrix<T> {
    let n = px.n();
    let floor = T::of(KERNEL_FLOOR);
    let mut g = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if i != j {
                let p = px.get(i, j);
                if p > floor {
                    g.set(i, j, -scale * py.get(i, j) / p);
                }
            }
        }
    }
    g
}

fn add_into<T: Real>(acc: &mut Matrix<T>, other: &Matrix<T>) {
    for (a, &b) in acc.as_mut_slice().iter_mut().zip(other.as_slice()) {
        *a += b;
    }
}

/// Backpropagate a gradient w.r.t. the probability matrix down to the
/// feature rows it was computed from.
fn prob_grad_to_features<T: Real>(
    g_prob: &Matrix<T>,
    probs: &CondProbMatrix<T>,
    kernel: &KernelMatrix<T>,
    features: &FeatureBatch<T>,
) -> Matrix<T> {
    let n = probs.n();
    let d = features.dim();
    let floor = T::of(KERNEL_FLOOR);

    // Through the column normalization: for anchor column c with
    // normalizer S_c, ∂P[i][c]/∂A[r][c] = (δ_ir − P[i][c]) / S_c where
    // A = max(K, floor). Collapse over i:
    //   GA[r][c] = (GP[r][c] − Σ_{i≠c} GP[i][c]·P[i][c]) / S_c.
    let mut g_kernel = Matrix::zeros(n, n);
    for c in 0..n {
        let mut weighted = T::zero();
        for i in 0..n {
            if i != c {
                weighted += g_prob.get(i, c) * probs.get(i, c);
            }
        }
        let denom = probs.denom(c);
        for r in 0..n {
            if r != c && kernel.get(r, c) > floor {
                // the floor max() has zero slope when the kernel sits at it
                g_kernel.set(r, c, (g_prob.get(r, c) - weighted) / denom);
            }
        }
    }

    // Through the cosine kernel. Cell (i, j) and cell (j, i) both read the
    // same κ(f_i, f_j);   ∂κ/∂f_i = (f̂_j − cos·f̂_i) / (2‖f_i‖).
    let norms: Vec<T> = features
        .rows()
        .map(|row| row.iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect();
    let unit: Vec<T> = features
        .rows()
        .zip(&norms)
        .flat_map(|(row, &norm)| {
            row.iter().map(move |&v| {
                if norm == T::zero() {
                    T::zero()
                } else {
                    v / norm
                }
            })
        })
        .collect();
    let half = T::of(0.5);
    let mut g_feat = Matrix::zeros(n, d);
    for i in 0..n {
        for j in (i + 1)..n {
            let coeff = g_kernel.get(i, j) + g_kernel.get(j, i);
            if coeff == T::zero() || norms[i] == T::zero() || norms[j] == T::zero() {
                continue;
            }
            let (ui, uj) = (&unit[i * d..(i + 1) * d], &unit[j * d..(j + 1) * d]);
            let mut cos = T::zero();
            for (&a, &b) in ui.iter().zip(uj) {
                cos += a * b;
            }
            let ci = coeff * half / norms[i];
            let cj = coeff * half / norms[j];
            let (gi, gj) = {
                let (head, tail) = g_feat.as_mut_slice().split_at_mut(j * d);
                (&mut head[i * d..(i + 1) * d], &mut tail[..d])
            };
            for (((gi_k, gj_k), &ui_k), &uj_k) in
                gi.iter_mut().zip(gj.iter_mut()).zip(ui).zip(uj)
            {
                *gi_k += ci * (uj_k - cos * ui_k);
                *gj_k += cj * (ui_k - cos * uj_k);
            }
        }
    }
    g_feat
}

/// Evaluate the chosen divergence between the conditional distributions of
/// `fx` and `fy`, with the exact analytic gradient w.r.t. the live rows of
/// `fx`. `fy` never receives gradients; non-live rows of `fx` contribute to
/// the value but get exactly-zero gradient rows.
pub fn divergence_with_grad<T: Real>(
    fx: &FeatureBatch<T>,
    fy: &FeatureBatch<T>,
    variant: DivergenceVariant,
    live: &LiveMask,
) -> Result<DivergenceResult<T>> {
    let n = fx.n();
    if fy.n() != n {
        return Err(Error::Shape(format!(
            "feature batches have {n} and {} samples",
            fy.n()
        )));
    }
    if n < 2 {
        return Err(Error::Invalid(format!(
            "divergence needs at least 2 samples, got {n}"
        )));
    }
    if live.len() != n {
        return Err(Error::Shape(format!(
            "live mask has {} entries for {n} samples",
            live.len()
        )));
    }
    if live.live_count() == 0 {
        return Err(Error::Invalid("live mask marks no rows live".into()));
    }

    let kx = kernel_matrix(fx)?;
    let px = cond_prob_matrix(&kx);
    let ky = kernel_matrix(fy)?;
    let py = cond_prob_matrix(&ky);

    let half = T::of(0.5);
    let (value, g_prob) = match variant {
        DivergenceVariant::Kl => (
            kl_divergence(&px, &py)?,
            kl_grad_wrt_first(&px, &py, T::one()),
        ),
        DivergenceVariant::Ikl => (
            kl_divergence(&py, &px)?,
            ikl_grad_wrt_second(&px, &py, T::one()),
        ),
        DivergenceVariant::Js => {
            let forward = kl_divergence(&px, &py)?;
            let backward = kl_divergence(&py, &px)?;
            let mut g = kl_grad_wrt_first(&px, &py, half);
            add_into(&mut g, &ikl_grad_wrt_second(&px, &py, half));
            (half * forward + half * backward, g)
        }
    };

    let mut grad = prob_grad_to_features(&g_prob, &px, &kx, fx);
    for i in 0..n {
        if !live.is_live(i) {
            grad.row_mut(i).fill(T::zero());
        }
    }

    Ok(DivergenceResult {
        value,
        grad,
        variant,
    })
}

/// Mean squared error over features with its gradient: the perceptual-loss
/// baseline. Requires identical shapes.
pub fn perceptual_mse<T: Real>(fx: &FeatureBatch<T>, fy: &FeatureBatch<T>) -> Result<(T, Matrix<T>)> {
    if fx.n() != fy.n() || fx.dim() != fy.dim() {
        return Err(Error::Shape(format!(
            "feature batches are {}x{} and {}x{}",
            fx.n(),
            fx.dim(),
            fy.n(),
            fy.dim()
        )));
    }
    let count = T::of((fx.n() * fx.dim()) as f64);
    let mut value = T::zero();
    let mut grad = Matrix::zeros(fx.n(), fx.dim());
    let two = T::of(2.0);
    for (g, (&a, &b)) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(fx.as_slice().iter().zip(fy.as_slice()))
    {
        let diff = a - b;
        value += diff * diff;
        *g = two * diff / count;
    }
    Ok((value / count, grad))
}
