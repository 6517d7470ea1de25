use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::numerics::{orthonormality_error, symmetric_eigen, DenseMatrix};

/// Eigen-spectrum of a sample covariance and its cumulative normalised sum.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCurve {
    /// Covariance eigenvalues, descending, one per ambient dimension.
    pub eigenvalues: Vec<f64>,
    /// `cumulative[j]` is the fraction explained by the first `j + 1` PCs.
    pub cumulative: Vec<f64>,
}

impl VarianceCurve {
    /// Smallest number of PCs whose cumulative fraction reaches `threshold`.
    pub fn pcs_for_threshold(&self, threshold: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| c >= threshold - 1e-12)
            .map_or(self.cumulative.len(), |i| i + 1)
    }
}

/// PCA spectrum of the rows of `activations` (`m × n`).
pub fn variance_explained_curve(activations: &DenseMatrix) -> Result<VarianceCurve> {
    let (m, n) = activations.shape();
    if m < 2 {
        return Err(invalid!("variance curve needs at least 2 samples, got {m}"));
    }
    activations.ensure_finite("activations")?;
    let mut centered = activations.clone();
    let means: Vec<f64> = centered.column_sums().into_iter().map(|s| s / m as f64).collect();
    for r in 0..m {
        for (v, mu) in centered.row_mut(r).iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    // The smaller Gram matrix has the same non-zero spectrum.
    let gram = if m < n {
        centered.matmul_nt(&centered)
    } else {
        centered.matmul_tn(&centered)
    };
    let (values, _) = symmetric_eigen(&gram)?;
    let mut eigenvalues = vec![0.0; n];
    for (e, v) in eigenvalues.iter_mut().zip(values) {
        *e = v.max(0.0) / (m - 1) as f64;
    }
    Ok(VarianceCurve {
        cumulative: cumulative_fraction(&eigenvalues),
        eigenvalues,
    })
}

/// Fraction of `‖J‖²_F` captured by projecting the rows of `j` onto the first
/// `1..=k` columns of the activation basis `u` (`n × k`).
pub fn jacobian_variance_curve(j: &DenseMatrix, u: &DenseMatrix) -> Result<Vec<f64>> {
    if j.cols() != u.rows() {
        return Err(invalid!(
            "jacobian has {} columns but basis lives in dimension {}",
            j.cols(),
            u.rows()
        ));
    }
    if orthonormality_error(u) > 1e-8 {
        return Err(invalid!("jacobian curve: basis is not orthonormal"));
    }
    let total = j.frobenius_dot(j);
    let proj = j.matmul(u);
    let mut acc = 0.0;
    Ok((0..u.cols())
        .map(|c| {
            acc += (0..proj.rows()).map(|r| proj[(r, c)] * proj[(r, c)]).sum::<f64>();
            if total > 0.0 {
                acc / total
            } else {
                0.0
            }
        })
        .collect())
}

/// Spectrum of the Jacobian rows in their own (uncentred) principal basis.
/// Alternative reading of the Jacobian PCA; the projection onto activation PCs
/// is [`jacobian_variance_curve`].
pub fn jacobian_spectrum_curve(j: &DenseMatrix) -> Result<VarianceCurve> {
    j.ensure_finite("jacobian")?;
    let n = j.cols();
    let gram = if j.rows() < n { j.matmul_nt(j) } else { j.matmul_tn(j) };
    let (values, _) = symmetric_eigen(&gram)?;
    let mut eigenvalues = vec![0.0; n];
    for (e, v) in eigenvalues.iter_mut().zip(values) {
        *e = v.max(0.0);
    }
    Ok(VarianceCurve {
        cumulative: cumulative_fraction(&eigenvalues),
        eigenvalues,
    })
}

fn cumulative_fraction(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    let mut acc = 0.0;
    values
        .iter()
        .map(|v| {
            acc += v;
            if total > 0.0 {
                acc / total
            } else {
                0.0
            }
        })
        .collect()
}
