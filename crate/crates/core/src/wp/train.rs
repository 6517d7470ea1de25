use alloc::vec::Vec;

use super::estimator::{draw_perturbation, rescale, FactorSide, PerturbationFamily};
use crate::data::MemoryBatch;
use crate::error::{invalid, Result};
use crate::manifold::ManifoldState;
use crate::nets::{Rnn, RnnGradients, SgdMomentum};
use crate::numerics::{random_orthonormal, DenseMatrix, SeededRng};

/// How the recurrent core (`W_hh`, `W_xh`, `b_h`) is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnnMethod {
    Backprop,
    Perturb(PerturbationFamily),
}

impl RnnMethod {
    pub fn name(self) -> alloc::string::String {
        match self {
            RnnMethod::Backprop => "backprop".into(),
            RnnMethod::Perturb(f) => f.name(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "backprop" || s == "bp" {
            Ok(RnnMethod::Backprop)
        } else {
            Ok(RnnMethod::Perturb(PerturbationFamily::parse(s)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WpConfig {
    pub method: RnnMethod,
    /// Factor(s) restricted by subspace families.
    pub side: FactorSide,
    /// Perturbation norm target per entry: `‖E‖_F = ε_WP·√(NM)`.
    pub eps_wp: f64,
    pub lr: f64,
    pub momentum: f64,
    /// Antithetic probes averaged per step.
    pub probes: usize,
    /// Dimension of the hidden-state manifold and of the fixed random subspace.
    pub pcs: usize,
}

impl WpConfig {
    pub fn new(method: RnnMethod) -> Self {
        Self {
            method,
            side: FactorSide::Left,
            eps_wp: 1e-4,
            lr: if method == RnnMethod::Backprop { 1e-3 } else { 1e-4 },
            momentum: 0.9,
            probes: 1,
            pcs: 32,
        }
    }
}

/// Alignment of the estimated `W_hh` update with the exact gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientAlignment {
    pub cosine: f64,
    /// `⟨Ĝ, G⟩/‖G‖²`.
    pub projected: f64,
    pub estimate_norm: f64,
    pub true_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WpStepReport {
    pub loss: f64,
    pub w_hh: Option<GradientAlignment>,
}

/// Recurrent core trained by weight perturbation (or backprop), readout by
/// exact gradients.
pub struct WpTrainer {
    pub rnn: Rnn,
    pub config: WpConfig,
    optimizer: SgdMomentum,
    manifold: Option<ManifoldState>,
    fixed_basis: Option<DenseMatrix>,
    rng: SeededRng,
    steps: usize,
}

impl WpTrainer {
    pub fn new(rnn: Rnn, config: WpConfig, rng: &mut SeededRng) -> Result<Self> {
        let h = rnn.hidden_size();
        let needs_basis = matches!(config.method, RnnMethod::Perturb(f) if f.needs_basis());
        if needs_basis && (config.pcs == 0 || config.pcs > h) {
            return Err(invalid!("pcs must lie in 1..={h}, got {}", config.pcs));
        }
        if config.probes == 0 || !(config.eps_wp > 0.0) {
            return Err(invalid!("need at least one probe and a positive perturbation scale"));
        }
        let mut setup = rng.fork(1);
        let manifold = match config.method {
            RnnMethod::Perturb(PerturbationFamily::Rank1Manifold) => {
                Some(ManifoldState::new(h, config.pcs, &mut setup)?)
            }
            _ => None,
        };
        let fixed_basis = match config.method {
            RnnMethod::Perturb(PerturbationFamily::Rank1FixedSubspace) => {
                Some(random_orthonormal(&mut setup, h, config.pcs)?)
            }
            _ => None,
        };
        let sizes = [
            rnn.w_xh.len(),
            rnn.w_hh.len(),
            rnn.b_h.len(),
            rnn.w_hy.len(),
            rnn.b_y.len(),
        ];
        let optimizer = SgdMomentum::new(config.lr, config.momentum, &sizes);
        Ok(Self {
            rnn,
            config,
            optimizer,
            manifold,
            fixed_basis,
            rng: rng.fork(2),
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Current perturbation basis, if the family uses one.
    pub fn basis(&self) -> Option<DenseMatrix> {
        self.manifold
            .as_ref()
            .map(ManifoldState::components)
            .or_else(|| self.fixed_basis.clone())
    }

    /// One update on `batch`. With `measure`, the exact `W_hh` gradient is
    /// computed alongside for alignment statistics only.
    pub fn step(&mut self, batch: &MemoryBatch, measure: bool) -> Result<WpStepReport> {
        self.steps += 1;
        let traj = self.rnn.forward(&batch.inputs)?;
        let (loss, g_hy, g_by) = self.rnn.readout_gradients(&traj, &batch.targets)?;
        if !loss.is_finite() {
            return Err(crate::Error::NonFinite("rnn loss"));
        }
        let exact = if measure || self.config.method == RnnMethod::Backprop {
            Some(self.rnn.gradients(&batch.inputs, &batch.targets)?)
        } else {
            None
        };

        let (g_xh, g_hh, g_bh) = match self.config.method {
            RnnMethod::Backprop => {
                let g = exact.as_ref().expect("exact gradients computed for backprop");
                (g.w_xh.clone(), g.w_hh.clone(), g.b_h.clone())
            }
            RnnMethod::Perturb(family) => {
                if let Some(m) = self.manifold.as_mut() {
                    let refs: Vec<&DenseMatrix> = traj.hidden[1..].iter().collect();
                    m.update(&DenseMatrix::vstack(&refs)?)?;
                }
                self.perturbation_estimate(family, batch)?
            }
        };

        let alignment = exact
            .as_ref()
            .filter(|_| measure)
            .map(|g: &RnnGradients| alignment(&g_hh, &g.w_hh));

        let r = &mut self.rnn;
        self.optimizer.step(0, r.w_xh.as_mut_slice(), g_xh.as_slice());
        self.optimizer.step(1, r.w_hh.as_mut_slice(), g_hh.as_slice());
        self.optimizer.step(2, &mut r.b_h, &g_bh);
        self.optimizer.step(3, r.w_hy.as_mut_slice(), g_hy.as_slice());
        self.optimizer.step(4, &mut r.b_y, &g_by);
        Ok(WpStepReport { loss, w_hh: alignment })
    }

    /// Joint antithetic estimate for `W_xh`, `W_hh` and `b_h`. Each tensor's
    /// perturbation is rescaled to `ε_WP·√(NM)`; the estimate uses the
    /// direction `E/ε_WP`, whose squared norm matches an isotropic draw.
    fn perturbation_estimate(
        &mut self,
        family: PerturbationFamily,
        batch: &MemoryBatch,
    ) -> Result<(DenseMatrix, DenseMatrix, Vec<f64>)> {
        let h = self.rnn.hidden_size();
        let k_in = self.rnn.input_size();
        let eps = self.config.eps_wp;
        let basis = self.basis();
        let mut acc_xh = DenseMatrix::zeros(h, k_in);
        let mut acc_hh = DenseMatrix::zeros(h, h);
        let mut acc_b = DenseMatrix::zeros(h, 1);
        let probes = self.config.probes;
        for _ in 0..probes {
            let mut draws = Vec::with_capacity(3);
            for (rows, cols) in [(h, k_in), (h, h), (h, 1)] {
                let mut e = draw_perturbation(family, rows, cols, self.config.side, basis.as_ref(), &mut self.rng)?;
                rescale(&mut e, eps)?;
                draws.push(e);
            }
            let plus = self.perturbed_loss(&draws, 1.0, batch)?;
            let minus = self.perturbed_loss(&draws, -1.0, batch)?;
            let coef = (plus - minus) / (2.0 * eps) / eps / probes as f64;
            acc_xh.axpy(coef, &draws[0]);
            acc_hh.axpy(coef, &draws[1]);
            acc_b.axpy(coef, &draws[2]);
        }
        Ok((acc_xh, acc_hh, acc_b.into_vec()))
    }

    fn perturbed_loss(&self, draws: &[DenseMatrix], sign: f64, batch: &MemoryBatch) -> Result<f64> {
        let mut probe = self.rnn.clone();
        probe.w_xh.axpy(sign, &draws[0]);
        probe.w_hh.axpy(sign, &draws[1]);
        for (b, e) in probe.b_h.iter_mut().zip(draws[2].as_slice()) {
            *b += sign * e;
        }
        let (loss, _) = probe.forward_loss(&batch.inputs, &batch.targets)?;
        if !loss.is_finite() {
            return Err(crate::Error::NonFinite("perturbed rnn loss"));
        }
        Ok(loss)
    }
}

fn alignment(estimate: &DenseMatrix, truth: &DenseMatrix) -> GradientAlignment {
    let dot = estimate.frobenius_dot(truth);
    let en = estimate.frobenius_norm();
    let tn = truth.frobenius_norm();
    GradientAlignment {
        cosine: if en > 0.0 && tn > 0.0 {
            dot / (en * tn)
        } else {
            f64::NAN
        },
        projected: if tn > 0.0 { dot / (tn * tn) } else { f64::NAN },
        estimate_norm: en,
        true_norm: tn,
    }
}
