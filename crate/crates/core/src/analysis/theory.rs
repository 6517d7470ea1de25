use alloc::vec::Vec;

use crate::credit::{feedback_update, matched_sigma_vnc, sample_noise, NoiseMethod};
use crate::error::{invalid, Result};
use crate::nets::{mlp_specs, softmax_cross_entropy, Activation, Network};
use crate::numerics::{gaussian_matrix, random_orthonormal, symmetric_eigen, vector, DenseMatrix, SeededRng};
use crate::wp::MseEstimate;

/// Closed-form expected squared cosine between `Σ̂⁽ᵏ⁾g` and `g` after `k`
/// noise draws: `k/(k+n+1)` for isotropic noise and `αk/(k+d+1)` for noise
/// confined to a `d`-dimensional subspace holding a fraction `α` of `‖g‖²`.
pub fn predicted_cos2(method: NoiseMethod, k: f64, n: usize, d: usize, alpha: f64) -> f64 {
    match method {
        NoiseMethod::Isotropic => k / (k + n as f64 + 1.0),
        NoiseMethod::Manifold => alpha * k / (k + d as f64 + 1.0),
    }
}

/// Limit of [`predicted_cos2`] as `k → ∞`.
pub fn cos2_asymptote(method: NoiseMethod, alpha: f64) -> f64 {
    match method {
        NoiseMethod::Isotropic => 1.0,
        NoiseMethod::Manifold => alpha,
    }
}

/// Per-trial statistics of `g̃ = Σ̂⁽ᵏ⁾g` for unit `g`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Cos2Moments {
    /// `cos²(g̃, g)`.
    pub cos2: MseEstimate,
    /// `g̃ᵀg`.
    pub dot: MseEstimate,
    /// `‖g̃‖²`.
    pub norm_sq: MseEstimate,
}

impl Cos2Moments {
    pub fn merge(&mut self, other: &Cos2Moments) {
        self.cos2.merge(&other.cos2);
        self.dot.merge(&other.dot);
        self.norm_sq.merge(&other.norm_sq);
    }

    /// `(E[g̃ᵀg])² / E‖g̃‖²`: the squared cosine with the denominator replaced
    /// by its expectation.
    pub fn moment_ratio(&self) -> f64 {
        self.dot.mean() * self.dot.mean() / self.norm_sq.mean()
    }
}

/// Monte-Carlo mean of `cos²(Σ̂⁽ᵏ⁾g, g)`. The subspace is spanned by the first
/// `d` coordinates and `g = √α e₁ + √(1−α) e_{d+1}`, which is general up to
/// rotation.
pub fn empirical_cos2(
    method: NoiseMethod,
    k: usize,
    n: usize,
    d: usize,
    alpha: f64,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<MseEstimate> {
    cos2_moments(method, k, n, d, alpha, trials, rng).map(|m| m.cos2)
}

/// [`empirical_cos2`] together with the first moment of `g̃ᵀg` and `‖g̃‖²`.
pub fn cos2_moments(
    method: NoiseMethod,
    k: usize,
    n: usize,
    d: usize,
    alpha: f64,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<Cos2Moments> {
    if k == 0 || d == 0 || d > n || !(0.0..=1.0).contains(&alpha) {
        return Err(invalid!("empirical cos²: invalid k={k}, n={n}, d={d}, alpha={alpha}"));
    }
    if alpha < 1.0 && d == n {
        return Err(invalid!("alpha < 1 needs a subspace smaller than the ambient space"));
    }
    let mut g = alloc::vec![0.0; n];
    g[0] = libm::sqrt(alpha);
    if d < n {
        g[d] = libm::sqrt(1.0 - alpha);
    }
    let width = match method {
        NoiseMethod::Manifold => d,
        NoiseMethod::Isotropic => n,
    };
    let mut out = Cos2Moments::default();
    let mut tilde = alloc::vec![0.0; n];
    for _ in 0..trials {
        tilde.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..k {
            let xi = rng.normal_vec(width);
            let c = vector::dot(&xi, &g[..width]);
            vector::axpy(&mut tilde[..width], c / k as f64, &xi);
        }
        let dot = vector::dot(&tilde, &g);
        let nt = vector::norm_sq(&tilde);
        out.cos2.push(if nt > 0.0 { dot * dot / nt } else { 0.0 });
        out.dot.push(dot);
        out.norm_sq.push(nt);
    }
    Ok(out)
}

/// `(n/d)·√α`: expected norm ratio of converged NMNC and VNC pseudo-gradients.
pub fn predicted_norm_ratio(n: usize, d: usize, alpha: f64) -> f64 {
    n as f64 / d as f64 * libm::sqrt(alpha)
}

/// `(n/d)·α`: ratio of their components along the true gradient.
pub fn predicted_projected_ratio(n: usize, d: usize, alpha: f64) -> f64 {
    n as f64 / d as f64 * alpha
}

/// Closed form `E‖(Σ̂ − Σ)g‖² = (1/k)[tr(Σ)·gᵀΣg + gᵀΣ²g]` for Gaussian noise.
pub fn predicted_noise_variance(sigma: &DenseMatrix, g: &[f64], k: usize) -> f64 {
    let sg = sigma.matvec(g);
    (sigma.trace() * vector::dot(g, &sg) + vector::norm_sq(&sg)) / k as f64
}

/// Monte-Carlo estimate of `E‖(Σ̂⁽ᵏ⁾ − Σ)g‖²` with `ξ ~ N(0, Σ)`, and the
/// closed form.
pub fn noise_variance_identity_check(
    sigma: &DenseMatrix,
    g: &[f64],
    k: usize,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<(MseEstimate, f64)> {
    let n = sigma.rows();
    if sigma.cols() != n || g.len() != n || k == 0 {
        return Err(invalid!("noise variance check: inconsistent shapes or k = 0"));
    }
    if sigma.sub(&sigma.transpose()).max_abs() > 1e-12 * sigma.max_abs().max(1.0) {
        return Err(invalid!("covariance must be symmetric"));
    }
    let (values, vectors) = symmetric_eigen(sigma)?;
    if values.iter().any(|&v| v < -1e-10 * values[0].abs().max(1.0)) {
        return Err(invalid!("covariance must be positive semi-definite"));
    }
    // ξ = V·diag(√λ)·z
    let factor = DenseMatrix::from_fn(n, n, |r, c| vectors[(r, c)] * libm::sqrt(values[c].max(0.0)));
    let sg = sigma.matvec(g);
    let mut est = MseEstimate::default();
    let mut eta = alloc::vec![0.0; n];
    for _ in 0..trials {
        eta.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..k {
            let xi = factor.matvec(&rng.normal_vec(n));
            vector::axpy(&mut eta, vector::dot(&xi, g) / k as f64, &xi);
        }
        vector::axpy(&mut eta, -1.0, &sg);
        est.push(vector::norm_sq(&eta));
    }
    Ok((est, predicted_noise_variance(sigma, g, k)))
}

/// Frozen linear network used to check the feedback fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSetup {
    /// Layer widths of an identity-activation MLP, input first.
    pub sizes: Vec<usize>,
    /// Hidden layer receiving noise.
    pub layer: usize,
    pub d: usize,
    pub batch: usize,
    pub eta_b: f64,
    pub updates: usize,
    pub sigma_nmnc: f64,
}

impl Default for FixedPointSetup {
    fn default() -> Self {
        Self {
            sizes: alloc::vec![32, 64, 48, 10],
            layer: 0,
            d: 8,
            batch: 64,
            eta_b: 0.001,
            updates: 10_000,
            sigma_nmnc: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    /// `‖B − ΣJᵀ‖_F/‖ΣJᵀ‖_F` for manifold and isotropic noise.
    pub rel_err_nmnc: f64,
    pub rel_err_vnc: f64,
    /// Cosine between the pseudo-gradient and `Σg`.
    pub cos_nmnc: f64,
    pub cos_vnc: f64,
    pub alpha: f64,
    pub norm_ratio: f64,
    pub predicted_norm_ratio: f64,
    pub projected_ratio: f64,
    pub predicted_projected_ratio: f64,
}

/// Runs `updates` noise-correlation steps with noise injected only at
/// `setup.layer` of a frozen linear network, once with manifold and once with
/// matched isotropic noise, and compares the learned feedback with `ΣJᵀ`.
pub fn feedback_fixed_point(setup: &FixedPointSetup, rng: &mut SeededRng) -> Result<FixedPointReport> {
    let net = Network::new(&mlp_specs(&setup.sizes, Activation::Identity), rng)?;
    let l = setup.layer;
    if l >= net.hidden_count() {
        return Err(invalid!("layer {l} is not hidden"));
    }
    let n = net.hidden_dims()[l];
    let n_o = net.output_dim();
    let u = random_orthonormal(rng, n, setup.d)?;
    let x = gaussian_matrix(rng, setup.batch, net.input_dim(), 1.0)?;
    let cache = net.forward(&x)?;
    let jt = net.jacobian(x.row(0), l)?.transpose();
    let sigma_v = matched_sigma_vnc(setup.d, n, setup.sigma_nmnc)?;
    let s2 = setup.sigma_nmnc * setup.sigma_nmnc;
    let target_n = u.matmul_nt(&u).matmul(&jt).scaled(s2);
    let target_v = jt.scaled(sigma_v * sigma_v);

    let mut learn = |method: NoiseMethod, sigma: f64| -> Result<DenseMatrix> {
        let mut b = DenseMatrix::zeros(n, n_o);
        let mut noise = alloc::vec![None; net.hidden_count()];
        for _ in 0..setup.updates {
            let xi = sample_noise(method, Some(&u), n, setup.batch, sigma, rng)?.xi;
            noise[l] = Some(xi);
            let dy = net.perturbed_output(&cache, &noise)?.sub(cache.output());
            feedback_update(&mut b, noise[l].as_ref().expect("set above"), &dy, setup.eta_b)?;
        }
        Ok(b)
    };
    let b_n = learn(NoiseMethod::Manifold, setup.sigma_nmnc)?;
    let b_v = learn(NoiseMethod::Isotropic, sigma_v)?;

    let targets: Vec<usize> = (0..setup.batch).map(|_| rng.below(n_o)).collect();
    let (_, delta) = softmax_cross_entropy(cache.output(), &targets)?;
    // true activation gradient of every example: δ_out J
    let g = delta.matmul_nt(&jt).into_vec();
    let pn = delta.matmul_nt(&b_n).into_vec();
    let pv = delta.matmul_nt(&b_v).into_vec();
    let sg_n = delta.matmul_nt(&target_n).into_vec();
    let sg_v = delta.matmul_nt(&target_v).into_vec();
    let proj = u.matmul_nt(&u);
    let pg = DenseMatrix::from_vec(setup.batch, n, g.clone())?
        .matmul(&proj)
        .into_vec();
    let alpha = vector::norm_sq(&pg) / vector::norm_sq(&g);
    let rel = |b: &DenseMatrix, t: &DenseMatrix| b.sub(t).frobenius_norm() / t.frobenius_norm();
    let cos = |a: &[f64], b: &[f64]| vector::dot(a, b) / (vector::norm(a) * vector::norm(b));
    let along = |p: &[f64]| vector::dot(p, &g) / vector::norm(&g);
    Ok(FixedPointReport {
        rel_err_nmnc: rel(&b_n, &target_n),
        rel_err_vnc: rel(&b_v, &target_v),
        cos_nmnc: cos(&pn, &sg_n),
        cos_vnc: cos(&pv, &sg_v),
        alpha,
        norm_ratio: vector::norm(&pn) / vector::norm(&pv),
        predicted_norm_ratio: predicted_norm_ratio(n, setup.d, alpha),
        projected_ratio: along(&pn) / along(&pv),
        predicted_projected_ratio: predicted_projected_ratio(n, setup.d, alpha),
    })
}

/// One-sided p-value for `mean_a > mean_b` from two independent Monte-Carlo
/// means with standard errors (normal approximation).
pub fn z_test_greater(a: &MseEstimate, b: &MseEstimate) -> (f64, f64) {
    let se = libm::hypot(a.std_err(), b.std_err());
    let z = (a.mean() - b.mean()) / se;
    (z, 0.5 * libm::erfc(z / core::f64::consts::SQRT_2))
}
