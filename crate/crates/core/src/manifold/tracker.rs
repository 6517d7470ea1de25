use alloc::vec::Vec;

use super::ipca::{ManifoldState, UpdateOutcome};
use crate::error::{invalid, Result};
use crate::numerics::DenseMatrix;

/// What happened to a batch handed to a tracker.
#[derive(Debug, Clone, PartialEq)]
pub enum Submission {
    Applied,
    /// Accepted for later processing.
    Queued,
    /// Rejected because the pending queue was full.
    DroppedFull,
    /// Rejected because the activations were not finite.
    DroppedInvalid,
}

/// Per-layer manifold estimation consumed by the trainer. The trainer only
/// ever sees snapshots and must tolerate them being stale.
pub trait ManifoldTracker {
    fn layers(&self) -> usize;

    /// Hands a batch of layer activations to the PCA updater.
    fn submit(&mut self, layer: usize, batch: &DenseMatrix) -> Result<Submission>;

    /// Latest available basis of `layer`.
    fn snapshot(&self, layer: usize) -> Result<DenseMatrix>;

    /// Number of batches that were actually folded into the estimate so far.
    fn applied(&self, layer: usize) -> usize;

    /// Blocks until all queued work is done. No-op for synchronous trackers.
    fn flush(&mut self) {}
}

/// Synchronous tracker: every submitted batch is applied before `submit`
/// returns, so results do not depend on thread timing. Batches with fewer
/// rows than retained components are staged until enough rows accumulate.
#[derive(Debug, Clone)]
pub struct InlineTracker {
    states: Vec<ManifoldState>,
    applied: Vec<usize>,
    staged: Vec<Vec<DenseMatrix>>,
}

impl InlineTracker {
    pub fn new(states: Vec<ManifoldState>) -> Self {
        let applied = alloc::vec![0; states.len()];
        let staged = alloc::vec![Vec::new(); states.len()];
        Self {
            states,
            applied,
            staged,
        }
    }

    pub fn state(&self, layer: usize) -> &ManifoldState {
        &self.states[layer]
    }
}

impl ManifoldTracker for InlineTracker {
    fn layers(&self) -> usize {
        self.states.len()
    }

    fn submit(&mut self, layer: usize, batch: &DenseMatrix) -> Result<Submission> {
        let state = self
            .states
            .get_mut(layer)
            .ok_or_else(|| invalid!("tracker: no layer {layer}"))?;
        if !batch.is_finite() {
            log::warn!("manifold tracker: layer {layer} batch with non-finite activations dropped");
            return Ok(Submission::DroppedInvalid);
        }
        let staged = &mut self.staged[layer];
        let rows = batch.rows() + staged.iter().map(DenseMatrix::rows).sum::<usize>();
        if rows < state.k() {
            staged.push(batch.clone());
            return Ok(Submission::Queued);
        }
        let outcome = if staged.is_empty() {
            state.update(batch)?
        } else {
            staged.push(batch.clone());
            let refs: Vec<&DenseMatrix> = staged.iter().collect();
            let merged = DenseMatrix::vstack(&refs)?;
            staged.clear();
            state.update(&merged)?
        };
        match outcome {
            UpdateOutcome::Applied => {
                self.applied[layer] += 1;
                Ok(Submission::Applied)
            }
            UpdateOutcome::Dropped(_) => Ok(Submission::DroppedInvalid),
        }
    }

    fn snapshot(&self, layer: usize) -> Result<DenseMatrix> {
        self.states
            .get(layer)
            .map(ManifoldState::components)
            .ok_or_else(|| invalid!("tracker: no layer {layer}"))
    }

    fn applied(&self, layer: usize) -> usize {
        self.applied[layer]
    }
}
