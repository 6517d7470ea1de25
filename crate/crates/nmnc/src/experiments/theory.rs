//! Monte-Carlo checks of the closed-form estimator statistics.
//!
//! Trials are split into fixed-size chunks, each on its own RNG stream, and
//! pooled in chunk order, so results do not depend on the thread count.

use std::path::Path;

use rayon::prelude::*;

use nmnc_core::analysis::{
    cos2_moments, feedback_fixed_point, noise_variance_identity_check, predicted_cos2, predicted_noise_variance,
    z_test_greater, Cos2Moments, FixedPointReport, FixedPointSetup,
};
use nmnc_core::credit::NoiseMethod;
use nmnc_core::numerics::{gaussian_matrix, random_orthonormal, DenseMatrix, SeededRng};
use nmnc_core::wp::{mse_closed_form, mse_oracle, second_moment, FactorSide, MseEstimate, PerturbationFamily};
use nmnc_core::Result;

use crate::config::ExperimentConfig;
use crate::output::{num, Table};

pub const CHUNK: usize = 10_000;

pub const COS2_SHAPES: [(usize, usize); 3] = [(16, 4), (64, 8), (256, 16)];
pub const COS2_ALPHAS: [f64; 2] = [0.5, 0.9];
/// Below `d/n` for (16, 4): isotropic noise should win.
pub const COS2_CONTROL: (usize, usize, f64) = (16, 4, 0.1);
pub const MSE_SHAPES: [(usize, usize); 3] = [(2, 2), (4, 4), (8, 4)];
pub const PROBE_COUNTS: [usize; 3] = [1, 4, 16];
pub const ISOTROPY_RANKS: [usize; 3] = [1, 2, 4];
const ISOTROPY_DRAWS: usize = 200_000;
const MOMENT_DIM: usize = 8;
const MOMENT_SUBSPACE: usize = 3;

/// Runs `trials` trials of `f` in parallel chunks and pools them in order.
pub fn pooled<F>(seed: u64, label: u64, trials: usize, f: F) -> Result<MseEstimate>
where
    F: Fn(usize, &mut SeededRng) -> Result<MseEstimate> + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = CHUNK.min(trials - c * CHUNK);
            let mut rng = SeededRng::with_stream(seed, stream_id(label, c as u64));
            f(n, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = MseEstimate::default();
    parts.iter().for_each(|p| total.merge(p));
    Ok(total)
}

fn stream_id(label: u64, chunk: u64) -> u64 {
    label
        .wrapping_mul(0x1_0000_0001)
        .wrapping_add(chunk)
        .wrapping_add(1 << 40)
}

fn rel(empirical: f64, predicted: f64) -> f64 {
    (empirical - predicted).abs() / predicted.abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub family: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub predicted: f64,
    pub empirical: f64,
    pub std_err: f64,
}

impl MseRow {
    pub fn rel_error(&self) -> f64 {
        rel(self.empirical, self.predicted)
    }
}

/// Frobenius MSE coefficients of the full and rank-1 antithetic estimators.
pub fn mse_table(seed: u64, trials: usize) -> Result<Vec<MseRow>> {
    let mut rows = Vec::new();
    let mut label = 0;
    for family in [PerturbationFamily::Full, PerturbationFamily::Rank1Iid] {
        for (n, m) in MSE_SHAPES {
            let g = gaussian_matrix(&mut SeededRng::with_stream(seed, 7), n, m, 1.0)?;
            for k in PROBE_COUNTS {
                label += 1;
                let est = pooled(seed, label, trials, |t, rng| mse_oracle(family, &g, k, t, None, rng))?;
                rows.push(MseRow {
                    family: family.name(),
                    n,
                    m,
                    k,
                    predicted: mse_closed_form(family, n, m, k).expect("closed form exists"),
                    empirical: est.mean(),
                    std_err: est.std_err(),
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotropyRow {
    pub rank: usize,
    pub n: usize,
    pub m: usize,
    /// `‖E[vec(E)vec(E)ᵀ] − I‖_F/‖I‖_F`.
    pub rel_error: f64,
}

pub fn isotropy_table(seed: u64) -> Result<Vec<IsotropyRow>> {
    let mut rows = Vec::new();
    for (i, r) in ISOTROPY_RANKS.into_iter().enumerate() {
        for (j, (n, m)) in MSE_SHAPES.into_iter().enumerate() {
            let label = 1000 + (i * 10 + j) as u64;
            let chunks = ISOTROPY_DRAWS.div_ceil(CHUNK);
            let parts = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let draws = CHUNK.min(ISOTROPY_DRAWS - c * CHUNK);
                    let mut rng = SeededRng::with_stream(seed, stream_id(label, c as u64));
                    let family = PerturbationFamily::RankR(r);
                    second_moment(family, n, m, FactorSide::Left, None, draws, &mut rng).map(|s| s.scaled(draws as f64))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut sum = DenseMatrix::zeros(n * m, n * m);
            parts.iter().for_each(|p| sum.axpy(1.0, p));
            sum.scale(1.0 / ISOTROPY_DRAWS as f64);
            let eye = DenseMatrix::identity(n * m);
            rows.push(IsotropyRow {
                rank: r,
                n,
                m,
                rel_error: sum.sub(&eye).frobenius_norm() / eye.frobenius_norm(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cos2Row {
    pub method: NoiseMethod,
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub k: usize,
    pub predicted: f64,
    pub empirical: f64,
    pub std_err: f64,
    /// `(E[g̃ᵀg])²/(E‖g̃‖²·‖g‖²)`, the quantity the closed form approximates
    /// the mean with.
    pub moment_ratio: f64,
    pub estimate: MseEstimate,
}

impl Cos2Row {
    pub fn rel_error(&self) -> f64 {
        rel(self.empirical, self.predicted)
    }
}

/// Probe counts for a subspace of dimension `d`: powers of two up to `d`
/// plus two beyond it.
pub fn cos2_ks(d: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = std::iter::successors(Some(1), |k| Some(k * 2))
        .take_while(|&k| k <= d)
        .collect();
    ks.extend([4 * d, 16 * d]);
    ks
}

pub fn cos2_cases() -> Vec<(usize, usize, f64)> {
    let mut cases: Vec<_> = COS2_SHAPES
        .iter()
        .flat_map(|&(n, d)| COS2_ALPHAS.iter().map(move |&a| (n, d, a)))
        .collect();
    cases.push(COS2_CONTROL);
    cases
}

pub fn cos2_table(seed: u64, trials: usize) -> Result<Vec<Cos2Row>> {
    let mut jobs = Vec::new();
    for (n, d, alpha) in cos2_cases() {
        for k in cos2_ks(d) {
            for method in [NoiseMethod::Manifold, NoiseMethod::Isotropic] {
                jobs.push((method, n, d, alpha, k));
            }
        }
    }
    jobs.par_iter()
        .enumerate()
        .map(|(i, &(method, n, d, alpha, k))| {
            let chunks = trials.div_ceil(CHUNK);
            let mut m = Cos2Moments::default();
            for c in 0..chunks {
                let t = CHUNK.min(trials - c * CHUNK);
                let mut rng = SeededRng::with_stream(seed, stream_id(2000 + i as u64, c as u64));
                m.merge(&cos2_moments(method, k, n, d, alpha, t, &mut rng)?);
            }
            let est = m.cos2;
            Ok(Cos2Row {
                method,
                n,
                d,
                alpha,
                k,
                predicted: predicted_cos2(method, k as f64, n, d, alpha),
                empirical: est.mean(),
                std_err: est.std_err(),
                moment_ratio: m.moment_ratio(),
                estimate: est,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverRow {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub k: usize,
    pub nmnc: f64,
    pub vnc: f64,
    /// One-sided p-value for NMNC > VNC.
    pub p_nmnc_greater: f64,
    /// One-sided p-value for VNC > NMNC.
    pub p_vnc_greater: f64,
}

/// NMNC-versus-VNC comparison for every `k ≤ d` in `rows`.
pub fn crossover(rows: &[Cos2Row]) -> Vec<CrossoverRow> {
    let mut out = Vec::new();
    for a in rows.iter().filter(|r| r.method == NoiseMethod::Manifold && r.k <= r.d) {
        let Some(b) = rows
            .iter()
            .find(|r| r.method == NoiseMethod::Isotropic && (r.n, r.d, r.k) == (a.n, a.d, a.k) && r.alpha == a.alpha)
        else {
            continue;
        };
        out.push(CrossoverRow {
            n: a.n,
            d: a.d,
            alpha: a.alpha,
            k: a.k,
            nmnc: a.empirical,
            vnc: b.empirical,
            p_nmnc_greater: z_test_greater(&a.estimate, &b.estimate).1,
            p_vnc_greater: z_test_greater(&b.estimate, &a.estimate).1,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub sigma: &'static str,
    pub n: usize,
    pub k: usize,
    pub predicted: f64,
    pub empirical: f64,
    pub std_err: f64,
}

impl MomentRow {
    pub fn rel_error(&self) -> f64 {
        rel(self.empirical, self.predicted)
    }
}

/// The three covariances of the fourth-moment check and the gradient used
/// with each: identity, a scaled projector (gradient inside its span) and a
/// random positive semi-definite matrix.
pub fn moment_cases(seed: u64) -> Result<Vec<(&'static str, DenseMatrix, Vec<f64>)>> {
    let mut rng = SeededRng::with_stream(seed, 11);
    let n = MOMENT_DIM;
    let g = rng.normal_vec(n);
    let u = random_orthonormal(&mut rng, n, MOMENT_SUBSPACE)?;
    let tau = 2.0;
    let projector = u.matmul_nt(&u).scaled(tau / MOMENT_SUBSPACE as f64);
    let g_in = u.matvec(&rng.normal_vec(MOMENT_SUBSPACE));
    let a = gaussian_matrix(&mut rng, n, n, 1.0)?;
    let psd = a.matmul_nt(&a).scaled(1.0 / n as f64);
    let psd = psd.add(&psd.transpose()).scaled(0.5);
    Ok(vec![
        ("identity", DenseMatrix::identity(n), g.clone()),
        ("projector", projector, g_in),
        ("random-psd", psd, g),
    ])
}

pub fn moment_table(seed: u64, trials: usize) -> Result<Vec<MomentRow>> {
    let mut rows = Vec::new();
    for (i, (name, sigma, g)) in moment_cases(seed)?.into_iter().enumerate() {
        for (j, k) in PROBE_COUNTS.into_iter().enumerate() {
            let label = 5000 + (i * 10 + j) as u64;
            let est = pooled(seed, label, trials, |t, rng| {
                noise_variance_identity_check(&sigma, &g, k, t, rng).map(|(e, _)| e)
            })?;
            rows.push(MomentRow {
                sigma: name,
                n: sigma.rows(),
                k,
                predicted: predicted_noise_variance(&sigma, &g, k),
                empirical: est.mean(),
                std_err: est.std_err(),
            });
        }
    }
    Ok(rows)
}

pub fn fixed_point(seed: u64, updates: usize) -> Result<FixedPointReport> {
    let setup = FixedPointSetup {
        updates,
        ..FixedPointSetup::default()
    };
    feedback_fixed_point(&setup, &mut SeededRng::with_stream(seed, 13))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRun {
    pub mse: Vec<MseRow>,
    pub isotropy: Vec<IsotropyRow>,
    pub cos2: Vec<Cos2Row>,
    pub moments: Vec<MomentRow>,
    pub fixed_point: FixedPointReport,
}

pub fn validate_theory(config: &ExperimentConfig, seed: u64) -> Result<TheoryRun> {
    let t = &config.theory;
    Ok(TheoryRun {
        mse: mse_table(seed, t.mse_trials)?,
        isotropy: isotropy_table(seed)?,
        cos2: cos2_table(seed, t.cos2_trials)?,
        moments: moment_table(seed, t.moment_trials)?,
        fixed_point: fixed_point(seed, t.fixed_point_updates)?,
    })
}

pub fn write_outputs(run: &TheoryRun, dir: &Path) -> std::io::Result<Vec<&'static str>> {
    let mut t = Table::new(&[
        "family",
        "N",
        "M",
        "K",
        "predicted",
        "empirical",
        "rel_error",
        "std_err",
    ]);
    for r in &run.mse {
        t.push(vec![
            r.family.clone(),
            r.n.to_string(),
            r.m.to_string(),
            r.k.to_string(),
            num(r.predicted),
            num(r.empirical),
            num(r.rel_error()),
            num(r.std_err),
        ]);
    }
    t.write(&dir.join("mse.csv"))?;

    let mut t = Table::new(&["rank", "N", "M", "rel_error"]);
    for r in &run.isotropy {
        t.push(vec![
            r.rank.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            num(r.rel_error),
        ]);
    }
    t.write(&dir.join("isotropy.csv"))?;

    let mut t = Table::new(&[
        "method",
        "n",
        "d",
        "alpha",
        "k",
        "predicted",
        "empirical",
        "rel_error",
        "std_err",
        "moment_ratio",
    ]);
    for r in &run.cos2 {
        t.push(vec![
            r.method.name().to_string(),
            r.n.to_string(),
            r.d.to_string(),
            num(r.alpha),
            r.k.to_string(),
            num(r.predicted),
            num(r.empirical),
            num(r.rel_error()),
            num(r.std_err),
            num(r.moment_ratio),
        ]);
    }
    t.write(&dir.join("cos2.csv"))?;

    let mut t = Table::new(&["n", "d", "alpha", "k", "nmnc", "vnc", "p_nmnc_greater", "p_vnc_greater"]);
    for r in crossover(&run.cos2) {
        t.push(vec![
            r.n.to_string(),
            r.d.to_string(),
            num(r.alpha),
            r.k.to_string(),
            num(r.nmnc),
            num(r.vnc),
            num(r.p_nmnc_greater),
            num(r.p_vnc_greater),
        ]);
    }
    t.write(&dir.join("crossover.csv"))?;

    let mut t = Table::new(&["sigma", "n", "k", "predicted", "empirical", "rel_error", "std_err"]);
    for r in &run.moments {
        t.push(vec![
            r.sigma.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            num(r.predicted),
            num(r.empirical),
            num(r.rel_error()),
            num(r.std_err),
        ]);
    }
    t.write(&dir.join("moments.csv"))?;

    let f = &run.fixed_point;
    let mut t = Table::new(&["quantity", "value"]);
    for (name, v) in [
        ("rel_err_nmnc", f.rel_err_nmnc),
        ("rel_err_vnc", f.rel_err_vnc),
        ("cos_nmnc", f.cos_nmnc),
        ("cos_vnc", f.cos_vnc),
        ("alpha", f.alpha),
        ("norm_ratio", f.norm_ratio),
        ("predicted_norm_ratio", f.predicted_norm_ratio),
        ("projected_ratio", f.projected_ratio),
        ("predicted_projected_ratio", f.predicted_projected_ratio),
    ] {
        t.push(vec![name.to_string(), num(v)]);
    }
    t.write(&dir.join("fixed_point.csv"))?;
    Ok(vec![
        "mse.csv",
        "isotropy.csv",
        "cos2.csv",
        "crossover.csv",
        "moments.csv",
        "fixed_point.csv",
    ])
}
