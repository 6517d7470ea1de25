use alloc::format;
use alloc::string::String;

use crate::error::{invalid, Error, Result};
use crate::numerics::{gaussian_matrix, DenseMatrix, SeededRng};

/// Which factor of a rank-1 subspace perturbation is drawn from the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorSide {
    /// `u` (rows, postsynaptic side).
    Left,
    /// `v` (columns, presynaptic side).
    Right,
    Both,
}

impl FactorSide {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "left" | "u" => Ok(FactorSide::Left),
            "right" | "v" => Ok(FactorSide::Right),
            "both" => Ok(FactorSide::Both),
            other => Err(invalid!("unknown factor side '{other}'")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FactorSide::Left => "left",
            FactorSide::Right => "right",
            FactorSide::Both => "both",
        }
    }
}

/// Distribution of weight perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationFamily {
    /// I.i.d. standard Gaussian entries.
    Full,
    /// `u vᵀ` with i.i.d. Gaussian factors.
    Rank1Iid,
    /// `u vᵀ` with one or both factors drawn inside a frozen random basis.
    Rank1FixedSubspace,
    /// `u vᵀ` with one or both factors drawn inside the live activity basis.
    Rank1Manifold,
    /// `(1/√r) Σ_k u_k v_kᵀ`.
    RankR(usize),
}

impl PerturbationFamily {
    pub fn name(self) -> String {
        match self {
            PerturbationFamily::Full => "full".into(),
            PerturbationFamily::Rank1Iid => "rank1-iid".into(),
            PerturbationFamily::Rank1FixedSubspace => "rank1-fixed-subspace".into(),
            PerturbationFamily::Rank1Manifold => "rank1-manifold".into(),
            PerturbationFamily::RankR(r) => format!("rank{r}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "full" | "vanilla" => PerturbationFamily::Full,
            "rank1-iid" | "rank1" => PerturbationFamily::Rank1Iid,
            "rank1-fixed-subspace" | "rank1-fixed" => PerturbationFamily::Rank1FixedSubspace,
            "rank1-manifold" => PerturbationFamily::Rank1Manifold,
            other => {
                let r = other
                    .strip_prefix("rank")
                    .and_then(|r| r.parse::<usize>().ok())
                    .filter(|&r| r >= 1)
                    .ok_or_else(|| invalid!("unknown perturbation family '{other}'"))?;
                if r == 1 {
                    PerturbationFamily::Rank1Iid
                } else {
                    PerturbationFamily::RankR(r)
                }
            }
        })
    }

    pub fn needs_basis(self) -> bool {
        matches!(
            self,
            PerturbationFamily::Rank1FixedSubspace | PerturbationFamily::Rank1Manifold
        )
    }
}

/// Draws an un-normalised perturbation of shape `rows × cols`. Subspace
/// families draw the selected factor(s) as `U a`, `a ~ N(0, I_d)`, with `basis`
/// an orthonormal `H × d` matrix; a factor whose length differs from `H` stays
/// i.i.d.
pub fn draw_perturbation(
    family: PerturbationFamily,
    rows: usize,
    cols: usize,
    side: FactorSide,
    basis: Option<&DenseMatrix>,
    rng: &mut SeededRng,
) -> Result<DenseMatrix> {
    match family {
        PerturbationFamily::Full => gaussian_matrix(rng, rows, cols, 1.0),
        PerturbationFamily::Rank1Iid => {
            let u = rng.normal_vec(rows);
            let v = rng.normal_vec(cols);
            Ok(DenseMatrix::outer(&u, &v))
        }
        PerturbationFamily::RankR(r) => {
            if r == 0 {
                return Err(invalid!("rank must be positive"));
            }
            let u = gaussian_matrix(rng, rows, r, 1.0)?;
            let v = gaussian_matrix(rng, cols, r, 1.0)?;
            let mut e = u.matmul_nt(&v);
            e.scale(1.0 / libm::sqrt(r as f64));
            Ok(e)
        }
        PerturbationFamily::Rank1FixedSubspace | PerturbationFamily::Rank1Manifold => {
            let basis = basis.ok_or(Error::MissingBasis("subspace weight perturbation"))?;
            let restrict_u = matches!(side, FactorSide::Left | FactorSide::Both) && basis.rows() == rows;
            let restrict_v = matches!(side, FactorSide::Right | FactorSide::Both) && basis.rows() == cols;
            if !restrict_u && !restrict_v && !(basis.rows() == rows || basis.rows() == cols) {
                return Err(invalid!(
                    "basis of dimension {} fits neither factor of a {rows}x{cols} perturbation",
                    basis.rows()
                ));
            }
            let u = factor(rows, restrict_u, basis, rng);
            let v = factor(cols, restrict_v, basis, rng);
            Ok(DenseMatrix::outer(&u, &v))
        }
    }
}

fn factor(len: usize, restricted: bool, basis: &DenseMatrix, rng: &mut SeededRng) -> alloc::vec::Vec<f64> {
    if restricted {
        let a = rng.normal_vec(basis.cols());
        basis.matvec(&a)
    } else {
        rng.normal_vec(len)
    }
}

/// Scales `e` so that `‖E‖_F = eps·√(rows·cols)`.
pub fn rescale(e: &mut DenseMatrix, eps: f64) -> Result<()> {
    let norm = e.frobenius_norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(invalid!("cannot rescale a perturbation of norm {norm}"));
    }
    e.scale(eps * libm::sqrt(e.len() as f64) / norm);
    Ok(())
}

/// Antithetic estimate `[(L(W + εE) − L(W − εE))/(2ε)]·E`.
pub fn antithetic_estimate<F>(mut loss: F, w: &DenseMatrix, e: &DenseMatrix, eps: f64) -> Result<DenseMatrix>
where
    F: FnMut(&DenseMatrix) -> f64,
{
    if !(eps > 0.0) {
        return Err(invalid!("probe scale must be positive, got {eps}"));
    }
    if w.shape() != e.shape() {
        return Err(invalid!(
            "perturbation shape {:?} differs from weight shape {:?}",
            e.shape(),
            w.shape()
        ));
    }
    let mut probe = w.clone();
    probe.axpy(eps, e);
    let plus = loss(&probe);
    probe.axpy(-2.0 * eps, e);
    let minus = loss(&probe);
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFinite("perturbed loss"));
    }
    Ok(e.scaled((plus - minus) / (2.0 * eps)))
}

/// Predicted Frobenius MSE coefficient `E‖Ĝ_K − G‖²/‖G‖²`, if a closed form exists.
pub fn mse_closed_form(family: PerturbationFamily, rows: usize, cols: usize, k: usize) -> Option<f64> {
    if k == 0 {
        return None;
    }
    let (n, m, k) = (rows as f64, cols as f64, k as f64);
    match family {
        PerturbationFamily::Full => Some((n * m + 1.0) / k),
        PerturbationFamily::Rank1Iid => Some(((n + 2.0) * (m + 2.0) - 1.0) / k),
        _ => None,
    }
}

/// Running sums of a Monte-Carlo MSE coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MseEstimate {
    pub sum: f64,
    pub sum_sq: f64,
    pub trials: usize,
}

impl MseEstimate {
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.trials += 1;
    }

    /// Pools an estimate computed on an independent stream.
    pub fn merge(&mut self, other: &MseEstimate) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.trials += other.trials;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.trials.max(1) as f64
    }

    pub fn std_err(&self) -> f64 {
        let n = self.trials as f64;
        if n < 2.0 {
            return f64::INFINITY;
        }
        let var = ((self.sum_sq - n * self.mean() * self.mean()) / (n - 1.0)).max(0.0);
        libm::sqrt(var / n)
    }
}

/// Averages `‖Ĝ_K − G‖²_F/‖G‖²_F` over `trials`, with `Ĝ_K` the mean of `k`
/// antithetic estimates on the linear loss `L(W) = ⟨G, W⟩`, for which the
/// estimate is exactly `⟨G, E⟩E`. Perturbations are not rescaled.
pub fn mse_oracle(
    family: PerturbationFamily,
    g: &DenseMatrix,
    k: usize,
    trials: usize,
    basis: Option<&DenseMatrix>,
    rng: &mut SeededRng,
) -> Result<MseEstimate> {
    let g_norm2 = g.frobenius_dot(g);
    if !(g_norm2 > 0.0) || k == 0 {
        return Err(invalid!("mse oracle needs nonzero G and k >= 1"));
    }
    let (rows, cols) = g.shape();
    let mut avg = DenseMatrix::zeros(rows, cols);
    let mut est = MseEstimate::default();
    for _ in 0..trials {
        avg.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..k {
            let e = draw_perturbation(family, rows, cols, FactorSide::Left, basis, rng)?;
            let c = e.frobenius_dot(g);
            avg.axpy(c / k as f64, &e);
        }
        let diff = avg.sub(g);
        est.push(diff.frobenius_dot(&diff) / g_norm2);
    }
    Ok(est)
}

/// Empirical second moment `E[vec(E) vec(E)ᵀ]` over `draws` un-normalised draws.
pub fn second_moment(
    family: PerturbationFamily,
    rows: usize,
    cols: usize,
    side: FactorSide,
    basis: Option<&DenseMatrix>,
    draws: usize,
    rng: &mut SeededRng,
) -> Result<DenseMatrix> {
    let d = rows * cols;
    let mut samples = DenseMatrix::zeros(draws, d);
    for i in 0..draws {
        let e = draw_perturbation(family, rows, cols, side, basis, rng)?;
        samples.row_mut(i).copy_from_slice(e.as_slice());
    }
    let mut m = samples.matmul_tn(&samples);
    m.scale(1.0 / draws.max(1) as f64);
    Ok(m)
}
