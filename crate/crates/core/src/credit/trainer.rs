use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::feedback::{
    apply_init_mode, feedback_update, init_jacobian_feedback, layer_noise_response, pseudo_error, weight_mirror_update,
    FeedbackInit,
};
use super::noise::{matched_sigma_vnc, sample_noise, NoiseMethod};
use crate::data::{epoch_batches, Dataset};
use crate::error::{invalid, Result};
use crate::manifold::{InlineTracker, ManifoldState, ManifoldTracker};
use crate::nets::{accuracy, softmax_cross_entropy, Network, ParamGrad, SgdMomentum};
use crate::numerics::{DenseMatrix, SeededRng};

/// Learning rule for the hidden layers. The output layer always receives its
/// exact gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Backprop,
    /// Direct feedback learned by manifold-restricted noise correlation.
    Nmnc,
    /// Direct feedback learned by isotropic noise correlation.
    Vnc,
    /// Fixed direct feedback.
    Dfa,
    /// Layerwise feedback learned by Weight Mirror with the given noise.
    Mirror(NoiseMethod),
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Backprop => "backprop",
            Rule::Nmnc => "nmnc",
            Rule::Vnc => "vnc",
            Rule::Dfa => "dfa",
            Rule::Mirror(NoiseMethod::Manifold) => "mirror",
            Rule::Mirror(NoiseMethod::Isotropic) => "mirror-vnc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "backprop" | "bp" => Rule::Backprop,
            "nmnc" => Rule::Nmnc,
            "vnc" => Rule::Vnc,
            "dfa" => Rule::Dfa,
            "mirror" | "mirror-nmnc" => Rule::Mirror(NoiseMethod::Manifold),
            "mirror-vnc" => Rule::Mirror(NoiseMethod::Isotropic),
            other => return Err(invalid!("unknown learning rule '{other}'")),
        })
    }

    /// Noise used to learn feedback, if any.
    pub fn noise(self) -> Option<NoiseMethod> {
        match self {
            Rule::Nmnc => Some(NoiseMethod::Manifold),
            Rule::Vnc => Some(NoiseMethod::Isotropic),
            Rule::Mirror(m) => Some(m),
            Rule::Backprop | Rule::Dfa => None,
        }
    }

    fn uses_direct_feedback(self) -> bool {
        matches!(self, Rule::Nmnc | Rule::Vnc | Rule::Dfa)
    }
}

/// Whether each example gets its own noise vector or the batch shares one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSharing {
    PerExample,
    Shared,
}

impl NoiseSharing {
    pub fn name(self) -> &'static str {
        match self {
            NoiseSharing::PerExample => "per-example",
            NoiseSharing::Shared => "shared",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "per-example" => NoiseSharing::PerExample,
            "shared" => NoiseSharing::Shared,
            other => return Err(invalid!("unknown noise sharing '{other}'")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub rule: Rule,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Feedback/PCA update interval in batches.
    pub interval: usize,
    pub eta_b: f64,
    pub sigma_nmnc: f64,
    /// Manifold dimension per hidden layer.
    pub pcs: Vec<usize>,
    pub init: FeedbackInit,
    pub initjac_batch: usize,
    pub sharing: NoiseSharing,
    /// Noisy forward on the same minibatch as the clean pass.
    pub same_minibatch: bool,
    pub mirror_lambda: f64,
    pub mirror_eta: f64,
}

impl TrainerConfig {
    pub fn new(rule: Rule, pcs: Vec<usize>) -> Self {
        let (mirror_lambda, mirror_eta) = match rule {
            Rule::Mirror(NoiseMethod::Isotropic) => (0.414, 0.0243),
            _ => (0.212, 0.101),
        };
        Self {
            rule,
            lr: 0.001,
            momentum: 0.9,
            batch_size: 64,
            interval: 5,
            eta_b: 0.001,
            sigma_nmnc: 1.0,
            pcs,
            init: FeedbackInit::PermutedInitJac,
            initjac_batch: 32,
            sharing: NoiseSharing::PerExample,
            same_minibatch: true,
            mirror_lambda,
            mirror_eta,
        }
    }
}

/// Per-epoch training summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// Feedback updates per hidden layer so far.
    pub feedback_updates: Vec<usize>,
}

/// Read-only view handed to observers before each weight update.
pub struct StepView<'a> {
    pub step: usize,
    pub net: &'a Network,
    /// Direct feedback matrices (`n_l × n_o`) or mirror weights in forward-weight layout.
    pub feedback: &'a [DenseMatrix],
    pub rule: Rule,
    pub inputs: &'a DenseMatrix,
    pub targets: &'a [usize],
}

/// Owns the network, its feedback state and the optimiser for one run.
pub struct Trainer<T: ManifoldTracker = InlineTracker> {
    pub net: Network,
    pub config: TrainerConfig,
    /// Direct rules: one `n_l × n_o` matrix per hidden layer. Mirror: one
    /// forward-weight-shaped matrix per layer `1..depth`, index `l − 1`.
    pub feedback: Vec<DenseMatrix>,
    tracker: T,
    optimizer: SgdMomentum,
    noise_rng: SeededRng,
    step: usize,
    feedback_updates: Vec<usize>,
    epoch: usize,
}

impl Trainer<InlineTracker> {
    /// Trainer with a synchronous manifold tracker.
    pub fn new(net: Network, config: TrainerConfig, rng: &mut SeededRng) -> Result<Self> {
        let states = manifold_states(&net, &config, rng)?;
        Self::with_tracker(net, config, InlineTracker::new(states), rng)
    }
}

/// Fresh PCA states for every hidden layer, sized by `config.pcs`.
pub fn manifold_states(net: &Network, config: &TrainerConfig, rng: &mut SeededRng) -> Result<Vec<ManifoldState>> {
    check_pcs(net, config)?;
    net.hidden_dims()
        .iter()
        .zip(&config.pcs)
        .map(|(&n, &d)| ManifoldState::new(n, d, rng))
        .collect()
}

fn check_pcs(net: &Network, config: &TrainerConfig) -> Result<()> {
    let dims = net.hidden_dims();
    if config.pcs.len() != dims.len() {
        return Err(invalid!(
            "{} manifold dimensions given for {} hidden layers",
            config.pcs.len(),
            dims.len()
        ));
    }
    for (l, (&d, &n)) in config.pcs.iter().zip(&dims).enumerate() {
        if d == 0 || d > n {
            return Err(invalid!("layer {l}: manifold dimension {d} outside 1..={n}"));
        }
    }
    Ok(())
}

impl<T: ManifoldTracker> Trainer<T> {
    pub fn with_tracker(net: Network, config: TrainerConfig, tracker: T, rng: &mut SeededRng) -> Result<Self> {
        check_pcs(&net, &config)?;
        if config.interval == 0 || config.batch_size == 0 {
            return Err(invalid!("interval and batch size must be positive"));
        }
        if tracker.layers() != net.hidden_count() {
            return Err(invalid!(
                "tracker has {} layers, network {}",
                tracker.layers(),
                net.hidden_count()
            ));
        }
        let mut init_rng = rng.fork(1);
        let feedback = match config.rule {
            Rule::Backprop => Vec::new(),
            Rule::Nmnc | Rule::Vnc | Rule::Dfa => {
                init_jacobian_feedback(&net, &mut init_rng, config.initjac_batch, config.init)?
            }
            Rule::Mirror(_) => net.layers[1..]
                .iter()
                .map(|layer| {
                    let mut m = layer.weight.clone();
                    apply_init_mode(&mut m, config.init, &mut init_rng);
                    m
                })
                .collect(),
        };
        let sizes: Vec<usize> = net.layers.iter().flat_map(|l| [l.weight.len(), l.bias.len()]).collect();
        let optimizer = SgdMomentum::new(config.lr, config.momentum, &sizes);
        let hidden = net.hidden_count();
        Ok(Self {
            net,
            config,
            feedback,
            tracker,
            optimizer,
            noise_rng: rng.fork(2),
            step: 0,
            feedback_updates: vec![0; hidden],
            epoch: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn feedback_updates(&self) -> &[usize] {
        &self.feedback_updates
    }

    pub fn tracker(&self) -> &T {
        &self.tracker
    }

    pub fn tracker_mut(&mut self) -> &mut T {
        &mut self.tracker
    }

    fn sigma(&self, method: NoiseMethod, layer: usize) -> Result<f64> {
        match method {
            NoiseMethod::Manifold => Ok(self.config.sigma_nmnc),
            NoiseMethod::Isotropic => matched_sigma_vnc(
                self.config.pcs[layer],
                self.net.hidden_dims()[layer],
                self.config.sigma_nmnc,
            ),
        }
    }

    fn draw(&mut self, method: NoiseMethod, layer: usize, rows: usize) -> Result<DenseMatrix> {
        let n = self.net.hidden_dims()[layer];
        let sigma = self.sigma(method, layer)?;
        let basis = match method {
            NoiseMethod::Manifold => Some(self.tracker.snapshot(layer)?),
            NoiseMethod::Isotropic => None,
        };
        let rows = match self.config.sharing {
            NoiseSharing::PerExample => rows,
            NoiseSharing::Shared => 1,
        };
        Ok(sample_noise(method, basis.as_ref(), n, rows, sigma, &mut self.noise_rng)?.xi)
    }

    /// Noise-correlation phase: PCA update, noisy forward, feedback update.
    fn feedback_phase(&mut self, cache: &crate::nets::ForwardCache, data: &Dataset) -> Result<()> {
        let Some(method) = self.config.rule.noise() else {
            return Ok(());
        };
        if method == NoiseMethod::Manifold {
            for l in 0..self.net.hidden_count() {
                self.tracker.submit(l, &cache.post[l])?;
            }
        }
        let owned;
        let cache = if self.config.same_minibatch {
            cache
        } else {
            let idx: Vec<usize> = (0..cache.batch_size())
                .map(|_| self.noise_rng.below(data.len()))
                .collect();
            let (x, _) = data.batch(&idx);
            owned = self.net.forward(&x)?;
            &owned
        };
        let rows = cache.batch_size();
        match self.config.rule {
            Rule::Mirror(_) => {
                for l in 1..self.net.depth() {
                    let noise = self.draw(method, l - 1, rows)?;
                    let noise = if noise.rows() == rows {
                        noise
                    } else {
                        DenseMatrix::from_fn(rows, noise.cols(), |_, c| noise[(0, c)])
                    };
                    let layer = &self.net.layers[l];
                    let response = layer_noise_response(layer, &cache.pre[l], &noise)?;
                    weight_mirror_update(
                        &mut self.feedback[l - 1],
                        layer,
                        &noise,
                        &response,
                        self.config.mirror_lambda,
                        self.config.mirror_eta,
                    )?;
                    self.feedback_updates[l - 1] += 1;
                }
            }
            _ => {
                let mut noise = Vec::with_capacity(self.net.hidden_count());
                for l in 0..self.net.hidden_count() {
                    noise.push(Some(self.draw(method, l, rows)?));
                }
                let noisy = self.net.perturbed_output(cache, &noise)?;
                let dy = noisy.sub(cache.output());
                for (l, xi) in noise.iter().enumerate() {
                    let xi = xi.as_ref().expect("noise drawn for every hidden layer");
                    feedback_update(&mut self.feedback[l], xi, &dy, self.config.eta_b)?;
                    self.feedback_updates[l] += 1;
                }
            }
        }
        Ok(())
    }

    /// Parameter gradients for one batch under the configured rule.
    pub fn rule_gradients(
        &self,
        cache: &crate::nets::ForwardCache,
        targets: &[usize],
    ) -> Result<(f64, Vec<ParamGrad>)> {
        rule_gradients(&self.net, self.config.rule, &self.feedback, cache, targets)
    }

    /// One training iteration on a labelled batch; returns the clean-pass loss
    /// and accuracy on that batch.
    pub fn train_step(&mut self, x: &DenseMatrix, targets: &[usize], data: &Dataset) -> Result<(f64, f64)> {
        self.train_step_observed(x, targets, data, &mut |_| {})
    }

    pub fn train_step_observed(
        &mut self,
        x: &DenseMatrix,
        targets: &[usize],
        data: &Dataset,
        observer: &mut dyn FnMut(&StepView<'_>),
    ) -> Result<(f64, f64)> {
        self.step += 1;
        let cache = self.net.forward(x)?;
        if self.config.rule.noise().is_some() && self.step.is_multiple_of(self.config.interval) {
            self.feedback_phase(&cache, data)?;
        }
        observer(&StepView {
            step: self.step,
            net: &self.net,
            feedback: &self.feedback,
            rule: self.config.rule,
            inputs: x,
            targets,
        });
        let (loss, grads) = self.rule_gradients(&cache, targets)?;
        if !loss.is_finite() {
            return Err(crate::Error::NonFinite("training loss"));
        }
        let acc = accuracy(cache.output(), targets);
        for (l, g) in grads.iter().enumerate() {
            let layer = &mut self.net.layers[l];
            self.optimizer
                .step(2 * l, layer.weight.as_mut_slice(), g.weight.as_slice());
            self.optimizer.step(2 * l + 1, &mut layer.bias, &g.bias);
        }
        Ok((loss, acc))
    }

    /// One pass over `data` in shuffled minibatches.
    pub fn train_epoch(&mut self, data: &Dataset, rng: &mut SeededRng) -> Result<EpochMetrics> {
        self.train_epoch_observed(data, rng, &mut |_| {})
    }

    pub fn train_epoch_observed(
        &mut self,
        data: &Dataset,
        rng: &mut SeededRng,
        observer: &mut dyn FnMut(&StepView<'_>),
    ) -> Result<EpochMetrics> {
        if data.features() != self.net.input_dim() {
            return Err(invalid!(
                "data has {} features, network expects {}",
                data.features(),
                self.net.input_dim()
            ));
        }
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0.0, 0usize);
        for idx in epoch_batches(data.len(), self.config.batch_size, rng) {
            let (x, y) = data.batch(&idx);
            let (loss, acc) = self.train_step_observed(&x, &y, data, observer)?;
            loss_sum += loss * idx.len() as f64;
            correct += acc * idx.len() as f64;
            seen += idx.len();
        }
        self.epoch += 1;
        self.tracker.flush();
        let seen = seen.max(1) as f64;
        Ok(EpochMetrics {
            epoch: self.epoch,
            train_loss: loss_sum / seen,
            train_accuracy: correct / seen,
            feedback_updates: self.feedback_updates.clone(),
        })
    }
}

/// Loss and per-layer parameter gradients prescribed by `rule`, given the
/// current feedback state. Hidden layers use the pseudo-error; the output
/// layer always uses its exact gradient.
pub fn rule_gradients(
    net: &Network,
    rule: Rule,
    feedback: &[DenseMatrix],
    cache: &crate::nets::ForwardCache,
    targets: &[usize],
) -> Result<(f64, Vec<ParamGrad>)> {
    let (loss, delta_out) = softmax_cross_entropy(cache.output(), targets)?;
    let depth = net.depth();
    let out = depth - 1;
    match rule {
        Rule::Backprop => {
            let (_, params) = net.backprop_from(cache, &delta_out);
            Ok((loss, params))
        }
        r if r.uses_direct_feedback() => {
            if feedback.len() != net.hidden_count() {
                return Err(invalid!(
                    "{} feedback matrices for {} hidden layers",
                    feedback.len(),
                    net.hidden_count()
                ));
            }
            let mut params = Vec::with_capacity(depth);
            for (l, b) in feedback.iter().enumerate() {
                let act = net.layers[l].spec.activation;
                let delta = pseudo_error(b, &delta_out, &cache.pre[l], act)?;
                params.push(net.layers[l].weight_gradient(&delta, cache.layer_input(l)));
            }
            params.push(net.layers[out].weight_gradient(&delta_out, cache.layer_input(out)));
            Ok((loss, params))
        }
        _ => {
            if feedback.len() != out {
                return Err(invalid!("{} mirror matrices for {} layers", feedback.len(), depth));
            }
            let mut params = vec![ParamGrad::zeros_like(&net.layers[0]); depth];
            let mut delta = delta_out;
            for l in (0..depth).rev() {
                params[l] = net.layers[l].weight_gradient(&delta, cache.layer_input(l));
                if l > 0 {
                    let g = net.layers[l].input_gradient_with(&feedback[l - 1], &delta);
                    let act = net.layers[l - 1].spec.activation;
                    let pre = &cache.pre[l - 1];
                    delta = DenseMatrix::from_fn(g.rows(), g.cols(), |r, c| g[(r, c)] * act.derivative(pre[(r, c)]));
                }
            }
            Ok((loss, params))
        }
    }
}

/// Human-readable summary of a trainer configuration.
pub fn describe(config: &TrainerConfig) -> String {
    format!(
        "rule={} lr={} momentum={} batch={} b={} eta_b={} sigma={} pcs={:?} init={}",
        config.rule.name(),
        config.lr,
        config.momentum,
        config.batch_size,
        config.interval,
        config.eta_b,
        config.sigma_nmnc,
        config.pcs,
        config.init.name()
    )
}
