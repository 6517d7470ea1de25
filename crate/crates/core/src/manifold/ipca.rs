use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::numerics::{leading_right_singular, random_orthonormal, DenseMatrix, SeededRng};

/// Streaming PCA state of one layer's activations.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldState {
    dim: usize,
    k: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
    /// `n × k`, orthonormal columns.
    components: DenseMatrix,
    singular_values: Vec<f64>,
    samples_seen: usize,
}

/// Result of feeding one batch to [`ManifoldState::update`].
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateOutcome {
    Applied,
    /// The batch contained non-finite activations and was ignored.
    Dropped(String),
}

impl ManifoldState {
    /// Fresh state whose components are a random orthonormal basis.
    pub fn new(dim: usize, k: usize, rng: &mut SeededRng) -> Result<Self> {
        if k == 0 || k > dim {
            return Err(invalid!("manifold: need 1 <= k <= n, got k={k}, n={dim}"));
        }
        Ok(Self {
            dim,
            k,
            mean: vec![0.0; dim],
            var: vec![0.0; dim],
            components: random_orthonormal(rng, dim, k)?,
            singular_values: vec![0.0; k],
            samples_seen: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.var
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn samples_seen(&self) -> usize {
        self.samples_seen
    }

    /// Borrowed view of the current principal axes (`n × k`).
    pub fn components_ref(&self) -> &DenseMatrix {
        &self.components
    }

    /// Snapshot copy of the current principal axes.
    pub fn components(&self) -> DenseMatrix {
        self.components.clone()
    }

    /// Incremental PCA step on a `b × n` batch. The SVD input stacks the
    /// previous components scaled by their singular values, the batch centred
    /// on its own mean and a mean-correction row.
    pub fn update(&mut self, x: &DenseMatrix) -> Result<UpdateOutcome> {
        let (b, n) = x.shape();
        if n != self.dim {
            return Err(invalid!("manifold: batch has {n} features, state has {}", self.dim));
        }
        if b < self.k {
            return Err(invalid!("manifold: batch of {b} rows is smaller than k={}", self.k));
        }
        if !x.is_finite() {
            let msg = format!("batch of {b} rows with non-finite activations dropped");
            log::warn!("incremental PCA: {msg}");
            return Ok(UpdateOutcome::Dropped(msg));
        }

        let batch_mean = x.column_sums().into_iter().map(|s| s / b as f64).collect::<Vec<_>>();
        let mut centered = x.clone();
        for r in 0..b {
            for (v, m) in centered.row_mut(r).iter_mut().zip(&batch_mean) {
                *v -= m;
            }
        }
        let batch_var: Vec<f64> = (0..n)
            .map(|c| (0..b).map(|r| centered[(r, c)] * centered[(r, c)]).sum::<f64>() / b as f64)
            .collect();

        let seen = self.samples_seen as f64;
        let total = seen + b as f64;
        let stacked = if self.samples_seen == 0 {
            centered
        } else {
            let mut prior = self.components.transpose();
            for (j, s) in self.singular_values.iter().enumerate() {
                prior.row_mut(j).iter_mut().for_each(|v| *v *= s);
            }
            let coef = libm::sqrt(seen * b as f64 / total);
            let correction: Vec<f64> = self
                .mean
                .iter()
                .zip(&batch_mean)
                .map(|(m, bm)| coef * (m - bm))
                .collect();
            DenseMatrix::vstack(&[&prior, &centered, &DenseMatrix::row_vector(&correction)])?
        };

        for c in 0..n {
            let delta = self.mean[c] - batch_mean[c];
            let m2 = seen * self.var[c] + b as f64 * batch_var[c] + delta * delta * seen * b as f64 / total;
            self.mean[c] = (seen * self.mean[c] + b as f64 * batch_mean[c]) / total;
            self.var[c] = m2 / total;
        }

        let (s, v) = leading_right_singular(&stacked, self.k)?;
        self.components = v;
        self.singular_values = s;
        self.samples_seen += b;
        Ok(UpdateOutcome::Applied)
    }
}
