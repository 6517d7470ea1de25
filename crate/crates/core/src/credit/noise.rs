use crate::error::{invalid, Result};
use crate::numerics::{gaussian_matrix, orthonormality_error, DenseMatrix, SeededRng};

/// How perturbations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMethod {
    /// `ξ = U ζ`, `ζ ~ N(0, σ² I_d)`.
    Manifold,
    /// `ξ ~ N(0, σ² I_n)`.
    Isotropic,
}

impl NoiseMethod {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMethod::Manifold => "nmnc",
            NoiseMethod::Isotropic => "vnc",
        }
    }
}

/// Isotropic noise scale with the same expected energy as manifold noise:
/// `σ_VNC = √(d/n)·σ_NMNC`.
pub fn matched_sigma_vnc(d: usize, n: usize, sigma_nmnc: f64) -> Result<f64> {
    if d == 0 || d > n {
        return Err(invalid!("matched sigma: need 1 <= d <= n, got d={d}, n={n}"));
    }
    Ok(libm::sqrt(d as f64 / n as f64) * sigma_nmnc)
}

/// One batch of perturbations for a layer.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub method: NoiseMethod,
    /// `rows × n`.
    pub xi: DenseMatrix,
    /// Low-dimensional draws `rows × d` (manifold noise only).
    pub zeta: Option<DenseMatrix>,
}

/// Draws `rows` perturbations of a layer of width `n`. Manifold noise needs
/// the basis `u` (`n × d`); isotropic noise uses `sigma` directly.
pub fn sample_noise(
    method: NoiseMethod,
    u: Option<&DenseMatrix>,
    n: usize,
    rows: usize,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<NoiseDraw> {
    match method {
        NoiseMethod::Manifold => {
            let u = u.ok_or(crate::Error::MissingBasis("manifold noise"))?;
            if u.rows() != n {
                return Err(invalid!(
                    "manifold basis has {} rows for a layer of width {n}",
                    u.rows()
                ));
            }
            debug_assert!(orthonormality_error(u) < 1e-6);
            let zeta = gaussian_matrix(rng, rows, u.cols(), sigma)?;
            let xi = zeta.matmul_nt(u);
            Ok(NoiseDraw {
                method,
                xi,
                zeta: Some(zeta),
            })
        }
        NoiseMethod::Isotropic => Ok(NoiseDraw {
            method,
            xi: gaussian_matrix(rng, rows, n, sigma)?,
            zeta: None,
        }),
    }
}
