use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::network::softmax_cross_entropy;
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SeededRng};

/// Vanilla tanh RNN with a linear readout:
/// `h_t = tanh(W_xh x_t + W_hh h_{t-1} + b_h)`, `y_t = W_hy h_t + b_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rnn {
    pub w_xh: DenseMatrix,
    pub w_hh: DenseMatrix,
    pub b_h: Vec<f64>,
    pub w_hy: DenseMatrix,
    pub b_y: Vec<f64>,
}

/// Hidden states `h_0..h_T` (with `h_0 = 0`) and logits `y_1..y_T`, each `batch × ·`.
#[derive(Debug, Clone)]
pub struct RnnTrajectory {
    pub hidden: Vec<DenseMatrix>,
    pub logits: Vec<DenseMatrix>,
}

#[derive(Debug, Clone)]
pub struct RnnGradients {
    pub loss: f64,
    pub w_xh: DenseMatrix,
    pub w_hh: DenseMatrix,
    pub b_h: Vec<f64>,
    pub w_hy: DenseMatrix,
    pub b_y: Vec<f64>,
}

impl Rnn {
    /// PyTorch-style `U(-1/√H, 1/√H)` initialisation for the recurrent core;
    /// `U(-1/√H, 1/√H)` for the readout as well.
    pub fn new(inputs: usize, hidden: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / libm::sqrt(hidden as f64);
        let mut u = |r: usize, c: usize| DenseMatrix::from_fn(r, c, |_, _| bound * (2.0 * rng.uniform() - 1.0));
        let w_xh = u(hidden, inputs);
        let w_hh = u(hidden, hidden);
        let b_h = u(1, hidden).into_vec();
        let w_hy = u(outputs, hidden);
        let b_y = u(1, outputs).into_vec();
        Self {
            w_xh,
            w_hh,
            b_h,
            w_hy,
            b_y,
        }
    }

    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            w_xh: DenseMatrix::zeros(hidden, inputs),
            w_hh: DenseMatrix::zeros(hidden, hidden),
            b_h: vec![0.0; hidden],
            w_hy: DenseMatrix::zeros(outputs, hidden),
            b_y: vec![0.0; outputs],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_xh.cols()
    }

    pub fn output_size(&self) -> usize {
        self.w_hy.rows()
    }

    pub fn forward(&self, inputs: &[DenseMatrix]) -> Result<RnnTrajectory> {
        let batch = inputs.first().map_or(0, DenseMatrix::rows);
        let h = self.hidden_size();
        let mut hidden = Vec::with_capacity(inputs.len() + 1);
        let mut logits = Vec::with_capacity(inputs.len());
        hidden.push(DenseMatrix::zeros(batch, h));
        for (t, x) in inputs.iter().enumerate() {
            if x.shape() != (batch, self.input_size()) {
                return Err(Error::InvalidArgument(format!(
                    "step {t}: input is {}x{}, expected {batch}x{}",
                    x.rows(),
                    x.cols(),
                    self.input_size()
                )));
            }
            let mut s = x.matmul_nt(&self.w_xh);
            s.axpy(1.0, &hidden[t].matmul_nt(&self.w_hh));
            s.add_row_broadcast(&self.b_h);
            let ht = s.map(libm::tanh);
            let mut y = ht.matmul_nt(&self.w_hy);
            y.add_row_broadcast(&self.b_y);
            hidden.push(ht);
            logits.push(y);
        }
        Ok(RnnTrajectory { hidden, logits })
    }

    /// Mean cross-entropy over all timesteps and sequences.
    pub fn forward_loss(&self, inputs: &[DenseMatrix], targets: &[Vec<usize>]) -> Result<(f64, RnnTrajectory)> {
        let traj = self.forward(inputs)?;
        let loss = sequence_loss(&traj, targets)?.0;
        Ok((loss, traj))
    }

    /// Full backpropagation through time.
    pub fn gradients(&self, inputs: &[DenseMatrix], targets: &[Vec<usize>]) -> Result<RnnGradients> {
        let traj = self.forward(inputs)?;
        let (loss, dlogits) = sequence_loss(&traj, targets)?;
        let (w_hy, b_y) = self.readout_gradients_from(&traj, &dlogits);
        let h = self.hidden_size();
        let mut w_xh = DenseMatrix::zeros(h, self.input_size());
        let mut w_hh = DenseMatrix::zeros(h, h);
        let mut b_h = vec![0.0; h];
        let steps = inputs.len();
        let mut carry: Option<DenseMatrix> = None;
        for t in (0..steps).rev() {
            let mut dh = dlogits[t].matmul(&self.w_hy);
            if let Some(c) = &carry {
                dh.axpy(1.0, c);
            }
            let ht = &traj.hidden[t + 1];
            let ds = DenseMatrix::from_fn(dh.rows(), h, |r, c| dh[(r, c)] * (1.0 - ht[(r, c)] * ht[(r, c)]));
            w_hh.axpy(1.0, &ds.matmul_tn(&traj.hidden[t]));
            w_xh.axpy(1.0, &ds.matmul_tn(&inputs[t]));
            for (b, v) in b_h.iter_mut().zip(ds.column_sums()) {
                *b += v;
            }
            carry = Some(ds.matmul(&self.w_hh));
        }
        Ok(RnnGradients {
            loss,
            w_xh,
            w_hh,
            b_h,
            w_hy,
            b_y,
        })
    }

    /// Exact gradient of the loss with respect to the readout only.
    pub fn readout_gradients(
        &self,
        traj: &RnnTrajectory,
        targets: &[Vec<usize>],
    ) -> Result<(f64, DenseMatrix, Vec<f64>)> {
        let (loss, dlogits) = sequence_loss(traj, targets)?;
        let (w, b) = self.readout_gradients_from(traj, &dlogits);
        Ok((loss, w, b))
    }

    fn readout_gradients_from(&self, traj: &RnnTrajectory, dlogits: &[DenseMatrix]) -> (DenseMatrix, Vec<f64>) {
        let mut w = DenseMatrix::zeros(self.output_size(), self.hidden_size());
        let mut b = vec![0.0; self.output_size()];
        for (t, d) in dlogits.iter().enumerate() {
            w.axpy(1.0, &d.matmul_tn(&traj.hidden[t + 1]));
            for (bi, v) in b.iter_mut().zip(d.column_sums()) {
                *bi += v;
            }
        }
        (w, b)
    }
}

/// Mean loss over `T × batch` predictions and per-step logit gradients.
fn sequence_loss(traj: &RnnTrajectory, targets: &[Vec<usize>]) -> Result<(f64, Vec<DenseMatrix>)> {
    let steps = traj.logits.len();
    if targets.len() != steps {
        return Err(Error::InvalidArgument(format!(
            "{} target steps for {steps} input steps",
            targets.len()
        )));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(steps);
    for (y, t) in traj.logits.iter().zip(targets) {
        let (l, mut g) = softmax_cross_entropy(y, t)?;
        total += l;
        g.scale(1.0 / steps as f64);
        grads.push(g);
    }
    Ok((total / steps as f64, grads))
}
