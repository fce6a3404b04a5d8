//! Memorized historic sampling: paired FIFO queues of feature rows.
//!
//! The per-step divergence estimate improves with more samples, but the
//! mini-batch size is bounded by memory. The queue pair keeps detached
//! feature rows from recent batches so the estimate runs over up to `q ≫ N`
//! samples: a new batch occupies positions `1..N` (newest first, batch
//! order preserved), everything else shifts back, and rows past the
//! capacity fall off. The restored-side and clear-side queues always hold
//! rows from the same sample pairs at the same positions.
//!
//! Only the newest batch carries gradients; a [`FeatureQueuePair::snapshot`]
//! therefore
//! returns the concatenated features together with a [`LiveMask`] marking
//! exactly those rows, ready for
//! [`divergence_with_grad`](crate::divergence::divergence_with_grad).
//! Before the queue has filled, estimates simply run over the current
//! occupancy rather than waiting for warm-up.

use std::collections::VecDeque;

use crate::divergence::LiveMask;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::tensor::{FeatureBatch, Origin};

/// Paired FIFO stores `Qˣ`, `Qʸ` of capacity `q`, newest entries first.
#[derive(Debug, Clone)]
pub struct FeatureQueuePair<T> {
    capacity: usize,
    dim: usize,
    restored: VecDeque<Vec<T>>,
    clear: VecDeque<Vec<T>>,
    live_count: usize,
}

/// Empty aligned queue pair with capacity `q ≥ 2` for `d`-dimensional rows.
pub fn new_queue_pair<T: Real>(q: usize, d: usize) -> Result<FeatureQueuePair<T>> {
    if q < 2 {
        return Err(Error::Invalid(format!(
            "queue capacity must be at least 2 to form sample pairs, got {q}"
        )));
    }
    if d == 0 {
        return Err(Error::Invalid("feature dimension must be positive".into()));
    }
    Ok(FeatureQueuePair {
        capacity: q,
        dim: d,
        restored: VecDeque::with_capacity(q),
        clear: VecDeque::with_capacity(q),
        live_count: 0,
    })
}

impl<T: Real> FeatureQueuePair<T> {
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Current number of stored sample pairs.
    pub fn occupancy(&self) -> usize {
        self.restored.len()
    }

    /// Size of the most recent batch (the gradient-carrying prefix).
    pub fn live_count(&self) -> usize {
        self.live_count
    }

    /// Push an aligned batch pair to the front of both queues.
    pub fn enqueue_batch(&mut self, fx: &FeatureBatch<T>, fy: &FeatureBatch<T>) -> Result<()> {
        let n = fx.n();
        if fy.n() != n {
            return Err(Error::Shape(format!(
                "batch sides have {n} and {} rows",
                fy.n()
            )));
        }
        if fx.dim() != self.dim || fy.dim() != self.dim {
            return Err(Error::Shape(format!(
                "queue stores {}-dim rows, batch has {} and {}",
                self.dim,
                fx.dim(),
                fy.dim()
            )));
        }
        if n > self.capacity {
            return Err(Error::Invalid(format!(
                "batch of {n} exceeds queue capacity {}",
                self.capacity
            )));
        }
        // Reverse insertion at the front keeps the batch's own order.
        for i in (0..n).rev() {
            self.restored.push_front(fx.row(i).to_vec());
            self.clear.push_front(fy.row(i).to_vec());
        }
        self.restored.truncate(self.capacity);
        self.clear.truncate(self.capacity);
        self.live_count = n;
        Ok(())
    }

    /// Concatenate the queue contents (newest first) into feature batches
    /// plus the live mask for the newest rows. Requires occupancy ≥ 2.
    pub fn snapshot(&self) -> Result<(FeatureBatch<T>, FeatureBatch<T>, LiveMask)> {
        let n = self.occupancy();
        if n < 2 {
            return Err(Error::Invalid(format!(
                "snapshot needs at least 2 stored pairs, have {n}"
            )));
        }
        let mut x = Vec::with_capacity(n * self.dim);
        for row in &self.restored {
            x.extend_from_slice(row);
        }
        let mut y = Vec::with_capacity(n * self.dim);
        for row in &self.clear {
            y.extend_from_slice(row);
        }
        Ok((
            FeatureBatch::new(n, self.dim, x, Origin::Restored)?,
            FeatureBatch::new(n, self.dim, y, Origin::Clear)?,
            LiveMask::newest_live(self.live_count, n),
        ))
    }
}
