use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::nets::{Activation, Layer, Network, ParamGrad};
use crate::numerics::{DenseMatrix, SeededRng};

/// How feedback matrices start out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackInit {
    /// Batch-averaged transposed Jacobian at initialisation.
    InitJac,
    /// The InitJac entries, randomly permuted.
    PermutedInitJac,
    /// I.i.d. Gaussian entries with the RMS of the InitJac entries.
    Random,
}

impl FeedbackInit {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackInit::InitJac => "initjac",
            FeedbackInit::PermutedInitJac => "permuted-initjac",
            FeedbackInit::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "initjac" => FeedbackInit::InitJac,
            "permuted-initjac" => FeedbackInit::PermutedInitJac,
            "random" => FeedbackInit::Random,
            other => return Err(invalid!("unknown feedback initialisation '{other}'")),
        })
    }
}

/// `B ← (1 − η_B)·B + η_B·(1/N_b)·Σ_b ξ_b Δy_bᵀ` with `B` of shape `n_l × n_o`.
/// A single noise row is treated as shared by every example of the batch.
pub fn feedback_update(b: &mut DenseMatrix, xi: &DenseMatrix, dy: &DenseMatrix, eta_b: f64) -> Result<()> {
    let nb = dy.rows();
    if xi.cols() != b.rows() || dy.cols() != b.cols() || (xi.rows() != nb && xi.rows() != 1) || nb == 0 {
        return Err(invalid!(
            "feedback update: B is {}x{}, noise {}x{}, output change {}x{}",
            b.rows(),
            b.cols(),
            xi.rows(),
            xi.cols(),
            dy.rows(),
            dy.cols()
        ));
    }
    let corr = if xi.rows() == nb {
        xi.matmul_tn(dy)
    } else {
        xi.matmul_tn(&DenseMatrix::row_vector(&dy.column_sums()))
    };
    b.scale(1.0 - eta_b);
    b.axpy(eta_b / nb as f64, &corr);
    Ok(())
}

/// `δ_l = φ'(s_l) ⊙ (B_l δ_out)` for every row of the batch.
pub fn pseudo_error(
    b: &DenseMatrix,
    delta_out: &DenseMatrix,
    pre: &DenseMatrix,
    act: Activation,
) -> Result<DenseMatrix> {
    if delta_out.cols() != b.cols() || pre.cols() != b.rows() || pre.rows() != delta_out.rows() {
        return Err(invalid!(
            "pseudo error: B is {}x{}, delta_out {}x{}, pre-activations {}x{}",
            b.rows(),
            b.cols(),
            delta_out.rows(),
            delta_out.cols(),
            pre.rows(),
            pre.cols()
        ));
    }
    let g = delta_out.matmul_nt(b);
    Ok(DenseMatrix::from_fn(g.rows(), g.cols(), |r, c| {
        g[(r, c)] * act.derivative(pre[(r, c)])
    }))
}

/// `ΔW_l = −η·Σ_b δ_b x_bᵀ` (and `Δb = −η·Σ_b δ_b`), in the layer's weight layout.
pub fn forward_weight_update(layer: &Layer, delta: &DenseMatrix, input: &DenseMatrix, lr: f64) -> ParamGrad {
    let mut g = layer.weight_gradient(delta, input);
    g.scale(-lr);
    g
}

/// Batch-mean transposed Jacobians `mean_b J_l(x_b)ᵀ` (`n_l × n_o`) of every
/// hidden layer over `batch` standard Gaussian inputs, then transformed
/// according to `mode`.
pub fn init_jacobian_feedback(
    net: &Network,
    rng: &mut SeededRng,
    batch: usize,
    mode: FeedbackInit,
) -> Result<Vec<DenseMatrix>> {
    if batch == 0 {
        return Err(invalid!("InitJac needs at least one input"));
    }
    let hidden = net.hidden_count();
    let n_o = net.output_dim();
    let mut acc: Vec<DenseMatrix> = net.hidden_dims().iter().map(|&n| DenseMatrix::zeros(n, n_o)).collect();
    let eye = DenseMatrix::identity(n_o);
    for _ in 0..batch {
        let x = DenseMatrix::row_vector(&rng.normal_vec(net.input_dim()));
        let cache = net.forward(&x)?;
        for (l, a) in acc.iter_mut().enumerate().take(hidden) {
            let j = net.pullback(&cache, &eye, l)?;
            a.axpy(1.0 / batch as f64, &j.transpose());
        }
    }
    for b in acc.iter_mut() {
        apply_init_mode(b, mode, rng);
    }
    Ok(acc)
}

/// Turns an InitJac matrix into the requested variant in place.
pub fn apply_init_mode(b: &mut DenseMatrix, mode: FeedbackInit, rng: &mut SeededRng) {
    match mode {
        FeedbackInit::InitJac => {}
        FeedbackInit::PermutedInitJac => rng.shuffle(b.as_mut_slice()),
        FeedbackInit::Random => {
            let rms = b.frobenius_norm() / libm::sqrt(b.len().max(1) as f64);
            b.as_mut_slice().iter_mut().for_each(|v| *v = rms * rng.normal());
        }
    }
}

/// Response of layer `layer`'s post-activation to `noise` added to its input:
/// `φ(s + W ξ) − φ(s)`, row by row. `s` is the clean pre-activation.
pub fn layer_noise_response(layer: &Layer, pre: &DenseMatrix, noise: &DenseMatrix) -> Result<DenseMatrix> {
    if noise.cols() != layer.spec.input_dim() || pre.cols() != layer.spec.output_dim() {
        return Err(Error::Layer {
            layer: 0,
            message: format!("noise response shape mismatch for {}", layer.spec.describe()),
        });
    }
    let shift = layer.linear_with(&layer.weight, noise);
    if shift.rows() != pre.rows() {
        return Err(invalid!("noise has {} rows, activations {}", shift.rows(), pre.rows()));
    }
    let act = layer.spec.activation;
    Ok(DenseMatrix::from_fn(pre.rows(), pre.cols(), |r, c| {
        act.apply(pre[(r, c)] + shift[(r, c)]) - act.apply(pre[(r, c)])
    }))
}

/// Weight Mirror step for the backward weights of `layer`, stored in the
/// layer's forward-weight layout:
/// `M ← (1 − λ_B)·M + η_B·(1/N_b)·Σ_b δ_{l+1,b} δ_{l,b}ᵀ`,
/// i.e. the transposed form of `B_l ← (1 − λ_B) B_l + η_B (1/N_b) δ_l δ_{l+1}ᵀ`.
pub fn weight_mirror_update(
    mirror: &mut DenseMatrix,
    layer: &Layer,
    noise: &DenseMatrix,
    response: &DenseMatrix,
    lambda_b: f64,
    eta_b: f64,
) -> Result<()> {
    if mirror.shape() != layer.weight.shape() || noise.rows() != response.rows() || noise.rows() == 0 {
        return Err(invalid!("weight mirror: inconsistent shapes"));
    }
    let corr = layer.weight_gradient(response, noise).weight;
    mirror.scale(1.0 - lambda_b);
    mirror.axpy(eta_b / noise.rows() as f64, &corr);
    Ok(())
}
