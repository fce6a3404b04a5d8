//! Adam with bias correction, applied to a fixed-order list of parameter
//! tensors.

use crate::error::{Error, Result};
use crate::num::Real;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    /// Zero state matching the given parameter tensors.
    pub fn new(params: &[&Vec<T>]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over parallel parameter/gradient tensor lists:
///
/// ```text
/// m ← β1·m + (1−β1)·g        m̂ = m / (1 − β1^t)
/// v ← β2·v + (1−β2)·g²       v̂ = v / (1 − β2^t)
/// w ← w − lr · m̂ / (√v̂ + ε)
/// ```
pub fn adam_step<T: Real>(
    params: &mut [&mut Vec<T>],
    state: &mut AdamState<T>,
    grads: &[&Vec<T>],
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "{} param tensors vs {} grad tensors vs state of {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), (m, v)) in params
        .iter()
        .zip(grads)
        .zip(state.m.iter().zip(&state.v))
    {
        if p.len() != g.len() || p.len() != m.len() || p.len() != v.len() {
            return Err(Error::Shape(
                "parameter/gradient/state tensor lengths disagree".into(),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let corr1 = T::one() - beta1.powi(t);
    let corr2 = T::one() - beta2.powi(t);
    let one = T::one();
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for k in 0..p.len() {
            let grad = g[k];
            m[k] = beta1 * m[k] + (one - beta1) * grad;
            v[k] = beta2 * v[k] + (one - beta2) * grad * grad;
            let m_hat = m[k] / corr1;
            let v_hat = v[k] / corr2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
