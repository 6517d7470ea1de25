//! Online estimation of the neural manifold: incremental PCA over streaming
//! activations, TwoNN intrinsic dimension and variance-explained curves.

mod curves;
mod ipca;
mod tracker;
mod twonn;

pub use curves::{jacobian_spectrum_curve, jacobian_variance_curve, variance_explained_curve, VarianceCurve};
pub use ipca::{ManifoldState, UpdateOutcome};
pub use tracker::{InlineTracker, ManifoldTracker, Submission};
pub use twonn::{twonn_estimate, DEFAULT_TRIM};

#[cfg(test)]
mod tests;
