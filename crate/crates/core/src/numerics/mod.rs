//! Dense linear algebra, seeded randomness and finite-difference oracles.

mod matrix;
mod rng;
pub mod vector;

use alloc::vec;
use alloc::vec::Vec;

pub use matrix::{gemm, DenseMatrix, DenseVector, Op};
pub use rng::{gaussian_matrix, random_orthonormal, SeededRng};

use crate::error::{invalid, Error, Result};

/// Thin singular value decomposition `A = U·diag(S)·Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m × r`, orthonormal columns.
    pub u: DenseMatrix,
    /// Descending, non-negative; `r = min(m, n)`.
    pub s: Vec<f64>,
    /// `n × r`, orthonormal columns.
    pub v: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (c, s) in self.s.iter().enumerate() {
                us[(r, c)] *= s;
            }
        }
        us.matmul_nt(&self.v)
    }
}

fn to_nalgebra(a: &DenseMatrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// Exact thin SVD with the deterministic sign convention: the largest-magnitude
/// entry of every right singular vector is positive.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(invalid!("svd: empty matrix {}x{}", a.rows(), a.cols()));
    }
    a.ensure_finite("svd input")?;
    let decomposition = to_nalgebra(a).svd(true, true);
    let (Some(u), Some(v_t)) = (decomposition.u, decomposition.v_t) else {
        return Err(Error::NonFinite("svd iteration"));
    };
    let s = decomposition.singular_values;
    let r = s.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let mut out_u = DenseMatrix::zeros(a.rows(), r);
    let mut out_v = DenseMatrix::zeros(a.cols(), r);
    let mut out_s = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol: Vec<f64> = (0..a.rows()).map(|i| u[(i, src)]).collect();
        let mut vcol: Vec<f64> = (0..a.cols()).map(|i| v_t[(src, i)]).collect();
        if largest_entry_negative(&vcol) {
            vector::scale(&mut ucol, -1.0);
            vector::scale(&mut vcol, -1.0);
        }
        out_u.set_column(dst, &ucol);
        out_v.set_column(dst, &vcol);
        out_s.push(s[src].max(0.0));
    }
    Ok(Svd {
        u: out_u,
        s: out_s,
        v: out_v,
    })
}

fn largest_entry_negative(v: &[f64]) -> bool {
    let mut best = 0.0f64;
    let mut sign_negative = false;
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            sign_negative = x < 0.0;
        }
    }
    sign_negative
}

/// Flips the sign of each column so its largest-magnitude entry is positive.
pub fn canonicalize_column_signs(m: &mut DenseMatrix) {
    for c in 0..m.cols() {
        let col = m.column(c);
        if largest_entry_negative(&col) {
            let flipped: Vec<f64> = col.iter().map(|v| -v).collect();
            m.set_column(c, &flipped);
        }
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending,
/// eigenvectors as columns.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if a.rows() != a.cols() {
        return Err(invalid!("symmetric_eigen: matrix is {}x{}", a.rows(), a.cols()));
    }
    a.ensure_finite("symmetric_eigen input")?;
    let eig = nalgebra::SymmetricEigen::new(to_nalgebra(a));
    let n = a.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vecs = from_nalgebra(&eig.eigenvectors);
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| vecs[(r, order[c])]);
    Ok((values, vectors))
}

/// Leading `k` singular values and right singular vectors of `a`, computed
/// exactly from the eigen-decomposition of the smaller Gram matrix.
///
/// Much cheaper than [`svd`] for strongly rectangular inputs. Accuracy of the
/// directions degrades only for singular values near `sqrt(eps)·s_max`.
pub fn leading_right_singular(a: &DenseMatrix, k: usize) -> Result<(Vec<f64>, DenseMatrix)> {
    let (m, n) = a.shape();
    if k == 0 || k > m.min(n) {
        return Err(invalid!("leading_right_singular: k={k} outside 1..={}", m.min(n)));
    }
    a.ensure_finite("leading_right_singular input")?;
    let (s, mut v) = if m <= n {
        let gram = a.matmul_nt(a);
        let (values, w) = symmetric_eigen(&gram)?;
        let w = w.columns(0, k);
        let mut v = a.matmul_tn(&w);
        let s: Vec<f64> = values[..k].iter().map(|&l| libm::sqrt(l.max(0.0))).collect();
        let floor = s[0] * 1e-13;
        for (j, &sj) in s.iter().enumerate() {
            if sj > floor && sj > 0.0 {
                for r in 0..n {
                    v[(r, j)] /= sj;
                }
            } else {
                for r in 0..n {
                    v[(r, j)] = 0.0;
                }
            }
        }
        (s, v)
    } else {
        let gram = a.matmul_tn(a);
        let (values, vecs) = symmetric_eigen(&gram)?;
        let s = values[..k].iter().map(|&l| libm::sqrt(l.max(0.0))).collect();
        (s, vecs.columns(0, k))
    };
    orthonormalize_columns(&mut v)?;
    canonicalize_column_signs(&mut v);
    Ok((s, v))
}

/// In-place modified Gram–Schmidt with one re-orthogonalisation pass. Columns
/// that vanish are replaced by the canonical basis vector with the largest
/// residual so the result always has orthonormal columns.
pub fn orthonormalize_columns(m: &mut DenseMatrix) -> Result<()> {
    let (n, k) = m.shape();
    if k > n {
        return Err(invalid!("orthonormalize_columns: {k} columns in dimension {n}"));
    }
    let mut cols: Vec<Vec<f64>> = (0..k).map(|c| m.column(c)).collect();
    for j in 0..k {
        let original = vector::norm(&cols[j]);
        for _ in 0..2 {
            for i in 0..j {
                let (head, tail) = cols.split_at_mut(j);
                let proj = vector::dot(&head[i], &tail[0]);
                vector::axpy(&mut tail[0], -proj, &head[i]);
            }
        }
        let mut nrm = vector::norm(&cols[j]);
        if !(nrm > 1e-10 * original.max(f64::MIN_POSITIVE)) || nrm == 0.0 {
            let mut best = (0.0, vec![0.0; n]);
            for e in 0..n {
                let mut cand = vec![0.0; n];
                cand[e] = 1.0;
                for c in &cols[..j] {
                    let proj = vector::dot(c, &cand);
                    vector::axpy(&mut cand, -proj, c);
                }
                let cn = vector::norm(&cand);
                if cn > best.0 {
                    best = (cn, cand);
                }
                if cn > 0.5 {
                    break;
                }
            }
            cols[j] = best.1;
            nrm = best.0;
        }
        vector::scale(&mut cols[j], 1.0 / nrm);
    }
    for (c, col) in cols.iter().enumerate() {
        m.set_column(c, col);
    }
    Ok(())
}

/// Largest principal angle (radians) between `span(b)` and `span(a)`, both
/// column-orthonormal, with `b.cols() <= a.cols()`. Computed through the sine
/// so angles near zero keep full relative precision.
pub fn max_principal_angle(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if a.rows() != b.rows() {
        return Err(invalid!(
            "max_principal_angle: ambient dims {} vs {}",
            a.rows(),
            b.rows()
        ));
    }
    let coeffs = a.matmul_tn(b);
    let residual = b.sub(&a.matmul(&coeffs));
    if residual.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let s = svd(&residual)?;
    Ok(libm::asin(s.s[0].min(1.0)))
}

/// `‖MᵀM − I‖_∞` (max-abs entry).
pub fn orthonormality_error(m: &DenseMatrix) -> f64 {
    m.matmul_tn(m).sub(&DenseMatrix::identity(m.cols())).max_abs()
}

/// Central-difference gradient of a scalar function of a matrix.
pub fn finite_diff_gradient<F>(mut f: F, w: &DenseMatrix, h: f64) -> Result<DenseMatrix>
where
    F: FnMut(&DenseMatrix) -> f64,
{
    if !(h > 0.0) {
        return Err(invalid!("finite_diff_gradient: step must be positive, got {h}"));
    }
    let mut probe = w.clone();
    let mut grad = DenseMatrix::zeros(w.rows(), w.cols());
    for i in 0..w.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let fp = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let fm = f(&probe);
        probe.as_mut_slice()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite("finite_diff_gradient objective"));
        }
        grad.as_mut_slice()[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_svd() {
        let s = svd(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(s.s, vec![1.0, 1.0, 1.0]);
        assert!(s.u.sub(&DenseMatrix::identity(3)).max_abs() < 1e-15);
        assert!(s.v.sub(&DenseMatrix::identity(3)).max_abs() < 1e-15);
    }

    #[test]
    fn diagonal_singular_values_sorted() {
        let s = svd(&DenseMatrix::diag(&[1.0, 3.0, 2.0])).unwrap();
        for (got, want) in s.s.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn random_reconstruction_orthonormality_and_signs() {
        let mut rng = SeededRng::new(11);
        for (m, n) in [(8, 5), (5, 8), (1, 4), (6, 1)] {
            let a = gaussian_matrix(&mut rng, m, n, 1.0).unwrap();
            let d = svd(&a).unwrap();
            let rel = d.reconstruct().sub(&a).frobenius_norm() / a.frobenius_norm();
            assert!(rel < 1e-10, "{m}x{n}: {rel}");
            assert!(orthonormality_error(&d.u) < 1e-10);
            assert!(orthonormality_error(&d.v) < 1e-10);
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            for c in 0..d.v.cols() {
                assert!(!largest_entry_negative(&d.v.column(c)));
            }
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut a = DenseMatrix::identity(2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn gram_route_matches_svd() {
        let mut rng = SeededRng::new(5);
        for (m, n) in [(6, 40), (40, 6)] {
            let a = gaussian_matrix(&mut rng, m, n, 1.0).unwrap();
            let exact = svd(&a).unwrap();
            let (s, v) = leading_right_singular(&a, 3).unwrap();
            for (a, b) in s.iter().zip(&exact.s[..3]) {
                assert!((a - b).abs() < 1e-10 * exact.s[0]);
            }
            let angle = max_principal_angle(&exact.v.columns(0, 3), &v).unwrap();
            assert!(angle < 1e-9, "angle {angle}");
            assert!(v.sub(&exact.v.columns(0, 3)).max_abs() < 1e-8);
        }
    }

    #[test]
    fn principal_angle_of_known_rotation() {
        let a = DenseMatrix::from_rows(&[&[1.0], &[0.0]]).unwrap();
        let t = 0.3f64;
        let b = DenseMatrix::from_rows(&[&[libm::cos(t)], &[libm::sin(t)]]).unwrap();
        assert!((max_principal_angle(&a, &b).unwrap() - t).abs() < 1e-14);
    }

    #[test]
    fn finite_difference_quadratic_and_linear() {
        let mut rng = SeededRng::new(1);
        let w = gaussian_matrix(&mut rng, 3, 4, 1.0).unwrap();
        let g = finite_diff_gradient(|m| m.frobenius_dot(m), &w, 1e-4).unwrap();
        assert!(g.sub(&w.scaled(2.0)).max_abs() < 1e-8);
        let a = gaussian_matrix(&mut rng, 3, 4, 1.0).unwrap();
        let g = finite_diff_gradient(|m| a.frobenius_dot(m), &w, 1e-3).unwrap();
        assert!(g.sub(&a).max_abs() < 1e-10);
    }

    #[test]
    fn finite_difference_rejects_non_finite_objective() {
        let w = DenseMatrix::identity(2);
        assert!(finite_diff_gradient(|_| f64::INFINITY, &w, 1e-3).is_err());
        assert!(finite_diff_gradient(|_| 0.0, &w, 0.0).is_err());
    }
}
