use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::ConvGeometry;
use super::layer::{Activation, Layer, LayerSpec, ParamGrad};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SeededRng};

/// Width multiplier as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Width {
    pub numerator: usize,
    pub denominator: usize,
}

impl Width {
    pub const FULL: Width = Width {
        numerator: 1,
        denominator: 1,
    };
    pub const EIGHTH: Width = Width {
        numerator: 1,
        denominator: 8,
    };

    pub fn new(numerator: usize, denominator: usize) -> Self {
        Self { numerator, denominator }
    }

    pub fn apply(&self, base: usize) -> usize {
        (base * self.numerator / self.denominator).max(1)
    }

    pub fn as_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// Parses `"1/8"`, `"2"` or `"3/2"`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("invalid width multiplier '{s}'"));
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let numerator: usize = num.parse().map_err(|_| bad())?;
        let denominator: usize = den.parse().map_err(|_| bad())?;
        if numerator == 0 || denominator == 0 {
            return Err(bad());
        }
        Ok(Self::new(numerator, denominator))
    }
}

impl core::fmt::Display for Width {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if self.denominator == 1 {
            write!(f, "{}", self.numerator)
        } else {
            write!(f, "{}/{}", self.numerator, self.denominator)
        }
    }
}

/// Layer list of the CIFAR-10 reference convolutional network at a given width:
/// three strided convolutions (5×5/2, 5×5/2, 3×3/2), a hidden dense layer and a
/// 10-way linear output. Full width yields flat dims 16384, 8192, 4096, 1024, 10.
pub fn cifar_reference_specs(width: Width) -> Vec<LayerSpec> {
    let c1 = width.apply(64);
    let c2 = width.apply(128);
    let c3 = width.apply(256);
    let fc = width.apply(1024);
    let conv1 = ConvGeometry {
        in_channels: 3,
        out_channels: c1,
        in_height: 32,
        in_width: 32,
        kernel: 5,
        stride: 2,
        padding: 2,
    };
    let conv2 = ConvGeometry {
        in_channels: c1,
        out_channels: c2,
        in_height: conv1.out_height(),
        in_width: conv1.out_width(),
        kernel: 5,
        stride: 2,
        padding: 2,
    };
    let conv3 = ConvGeometry {
        in_channels: c2,
        out_channels: c3,
        in_height: conv2.out_height(),
        in_width: conv2.out_width(),
        kernel: 3,
        stride: 2,
        padding: 1,
    };
    vec![
        LayerSpec::conv(conv1, Activation::Relu),
        LayerSpec::conv(conv2, Activation::Relu),
        LayerSpec::conv(conv3, Activation::Relu),
        LayerSpec::dense(conv3.output_len(), fc, Activation::Relu),
        LayerSpec::dense(fc, 10, Activation::Identity),
    ]
}

/// Fully connected network `sizes[0] → … → sizes[last]` with `hidden`
/// activations and a linear output.
pub fn mlp_specs(sizes: &[usize], hidden: Activation) -> Vec<LayerSpec> {
    let n = sizes.len().saturating_sub(1);
    (0..n)
        .map(|i| {
            let act = if i + 1 == n { Activation::Identity } else { hidden };
            LayerSpec::dense(sizes[i], sizes[i + 1], act)
        })
        .collect()
}

/// Feedforward network. Layers `0..L-1` are hidden; layer `L-1` is the linear
/// output layer producing logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Per-forward cache of pre-activations `s_l` and post-activations `x_l`.
/// Index `l` refers to layer `l`; the last entry of `post` is the logits.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: DenseMatrix,
    pub pre: Vec<DenseMatrix>,
    pub post: Vec<DenseMatrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &DenseMatrix {
        self.post.last().expect("network has at least one layer")
    }

    /// Input to layer `l` (`x_{l-1}`).
    pub fn layer_input(&self, l: usize) -> &DenseMatrix {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }

    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }
}

/// Exact gradients of the mean softmax cross-entropy.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    /// `(softmax(y) − onehot)/N_b`, `N_b × n_o`.
    pub delta_out: DenseMatrix,
    /// `∂L/∂x_l` for every hidden layer, `N_b × n_l`.
    pub activation: Vec<DenseMatrix>,
    /// Per-layer parameter gradients, output layer last.
    pub params: Vec<ParamGrad>,
}

/// Clean and perturbed outputs of a noisy forward pass.
#[derive(Debug, Clone)]
pub struct NoisyOutput {
    pub clean: DenseMatrix,
    pub noisy: DenseMatrix,
    /// `ỹ − y`.
    pub delta: DenseMatrix,
}

impl Network {
    pub fn new(specs: &[LayerSpec], rng: &mut SeededRng) -> Result<Self> {
        Self::validate(specs)?;
        Ok(Self {
            layers: specs.iter().map(|&s| Layer::init(s, rng)).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        Self::validate(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            let (r, c) = l.spec.weight_shape();
            if l.weight.shape() != (r, c) || l.bias.len() != r {
                return Err(Error::Layer {
                    layer: i,
                    message: format!("parameters do not match {}", l.spec.describe()),
                });
            }
        }
        Ok(Self { layers })
    }

    fn validate(specs: &[LayerSpec]) -> Result<()> {
        if specs.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for i in 1..specs.len() {
            if specs[i].input_dim() != specs[i - 1].output_dim() {
                return Err(Error::Layer {
                    layer: i,
                    message: format!(
                        "expects {} inputs but layer {} produces {}",
                        specs[i].input_dim(),
                        i - 1,
                        specs[i - 1].output_dim()
                    ),
                });
            }
        }
        let last = specs.len() - 1;
        if specs[last].activation != Activation::Identity {
            return Err(Error::Layer {
                layer: last,
                message: "output layer must be linear".into(),
            });
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.output_dim()
    }

    /// Flat dimension `n_l` of every layer's post-activation, output included.
    pub fn layer_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.spec.output_dim()).collect()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.hidden_count()]
            .iter()
            .map(|l| l.spec.output_dim())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Layer {
                layer: 0,
                message: format!("input has {} features, expected {}", x.cols(), self.input_dim()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<ForwardCache> {
        self.forward_perturbed(x, &[])
    }

    /// Forward pass adding `noise[l]` to the post-activation of hidden layer
    /// `l`. Noise matrices have either one row per example or a single row
    /// shared by the batch.
    pub fn forward_perturbed(&self, x: &DenseMatrix, noise: &[Option<&DenseMatrix>]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.depth());
        let mut post: Vec<DenseMatrix> = Vec::with_capacity(self.depth());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { &post[l - 1] };
            let s = layer.pre_activation(input);
            let mut a = layer.activate(&s);
            if let Some(Some(xi)) = noise.get(l) {
                if l >= self.hidden_count() {
                    return Err(Error::Layer {
                        layer: l,
                        message: "noise can only be injected into hidden layers".into(),
                    });
                }
                add_noise(&mut a, xi, l)?;
            }
            pre.push(s);
            post.push(a);
        }
        Ok(ForwardCache {
            input: x.clone(),
            pre,
            post,
        })
    }

    /// Output obtained by re-running the network from the clean `cache` with
    /// `noise[l]` added after the activation of each hidden layer. Layers
    /// without an entry receive no perturbation.
    pub fn perturbed_output(&self, cache: &ForwardCache, noise: &[Option<DenseMatrix>]) -> Result<DenseMatrix> {
        let hidden = self.hidden_count();
        if noise.len() > hidden {
            return Err(Error::InvalidArgument(format!(
                "{} noise entries for {hidden} hidden layers",
                noise.len()
            )));
        }
        let missing: Vec<usize> = (0..hidden)
            .filter(|&l| noise.get(l).is_none_or(Option::is_none))
            .collect();
        if !missing.is_empty() {
            log::debug!("noisy forward: layers {missing:?} receive no perturbation");
        }
        let Some(first) = (0..hidden).find(|&l| matches!(noise.get(l), Some(Some(_)))) else {
            return Ok(cache.output().clone());
        };
        let mut current = cache.post[first].clone();
        add_noise(&mut current, noise[first].as_ref().unwrap(), first)?;
        for l in first + 1..self.depth() {
            let layer = &self.layers[l];
            let s = layer.pre_activation(&current);
            current = layer.activate(&s);
            if let Some(Some(xi)) = noise.get(l) {
                add_noise(&mut current, xi, l)?;
            }
        }
        Ok(current)
    }

    /// Clean and noisy forward on the same input, returning `Δy = ỹ − y`.
    pub fn noisy_forward(&self, x: &DenseMatrix, noise: &[Option<DenseMatrix>]) -> Result<NoisyOutput> {
        let cache = self.forward(x)?;
        let noisy = self.perturbed_output(&cache, noise)?;
        let clean = cache.output().clone();
        let delta = noisy.sub(&clean);
        Ok(NoisyOutput { clean, noisy, delta })
    }

    /// Exact backpropagation of the mean softmax cross-entropy.
    pub fn backprop(&self, cache: &ForwardCache, targets: &[usize]) -> Result<Gradients> {
        let (loss, delta_out) = softmax_cross_entropy(cache.output(), targets)?;
        let (activation, params) = self.backprop_from(cache, &delta_out);
        Ok(Gradients {
            loss,
            delta_out,
            activation,
            params,
        })
    }

    /// Backpropagates an output gradient, returning `∂/∂x_l` for hidden layers
    /// and parameter gradients for every layer.
    pub fn backprop_from(&self, cache: &ForwardCache, delta_out: &DenseMatrix) -> (Vec<DenseMatrix>, Vec<ParamGrad>) {
        let depth = self.depth();
        let mut params = Vec::with_capacity(depth);
        let mut activation = vec![DenseMatrix::zeros(0, 0); depth - 1];
        let mut delta = delta_out.clone();
        for l in (0..depth).rev() {
            let layer = &self.layers[l];
            params.push(layer.weight_gradient(&delta, cache.layer_input(l)));
            if l > 0 {
                let g = layer.input_gradient(&delta);
                let act = self.layers[l - 1].spec.activation;
                delta = DenseMatrix::from_fn(g.rows(), g.cols(), |r, c| {
                    g[(r, c)] * act.derivative(cache.pre[l - 1][(r, c)])
                });
                activation[l - 1] = g;
            }
        }
        params.reverse();
        (activation, params)
    }

    /// Pulls output cotangents (rows × n_o) back to the post-activation of
    /// hidden layer `layer`. `cache` holds either the same number of rows or a
    /// single example whose activation derivatives are shared by every row.
    pub fn pullback(&self, cache: &ForwardCache, cotangent: &DenseMatrix, layer: usize) -> Result<DenseMatrix> {
        if layer >= self.hidden_count() {
            return Err(Error::Layer {
                layer,
                message: format!("not a hidden layer (network has {} hidden layers)", self.hidden_count()),
            });
        }
        let shared = cache.batch_size() == 1;
        if !shared && cache.batch_size() != cotangent.rows() {
            return Err(Error::InvalidArgument(
                "pullback: cache and cotangent batch sizes differ".into(),
            ));
        }
        let mut delta = cotangent.clone();
        let mut l = self.depth() - 1;
        loop {
            let g = self.layers[l].input_gradient(&delta);
            if l - 1 == layer {
                return Ok(g);
            }
            let act = self.layers[l - 1].spec.activation;
            let pre = &cache.pre[l - 1];
            delta = DenseMatrix::from_fn(g.rows(), g.cols(), |r, c| {
                let row = if shared { 0 } else { r };
                g[(r, c)] * act.derivative(pre[(row, c)])
            });
            l -= 1;
        }
    }

    /// Jacobian `∂y/∂x_l` (`n_o × n_l`) at a single input, one backward pass per output.
    pub fn jacobian(&self, x: &[f64], layer: usize) -> Result<DenseMatrix> {
        let cache = self.forward(&DenseMatrix::row_vector(x))?;
        self.pullback(&cache, &DenseMatrix::identity(self.output_dim()), layer)
    }

    /// Mean cross-entropy loss and accuracy on a labelled batch.
    pub fn evaluate(&self, x: &DenseMatrix, targets: &[usize]) -> Result<(f64, f64)> {
        let cache = self.forward(x)?;
        let (loss, _) = softmax_cross_entropy(cache.output(), targets)?;
        Ok((loss, accuracy(cache.output(), targets)))
    }
}

fn add_noise(a: &mut DenseMatrix, xi: &DenseMatrix, layer: usize) -> Result<()> {
    if xi.cols() != a.cols() || (xi.rows() != a.rows() && xi.rows() != 1) {
        return Err(Error::Layer {
            layer,
            message: format!(
                "noise is {}x{}, activations are {}x{}",
                xi.rows(),
                xi.cols(),
                a.rows(),
                a.cols()
            ),
        });
    }
    if xi.rows() == a.rows() {
        a.axpy(1.0, xi);
    } else {
        a.add_row_broadcast(xi.row(0));
    }
    Ok(())
}

/// Mean softmax cross-entropy over rows and its gradient
/// `(softmax(y) − onehot)/N_b`.
pub fn softmax_cross_entropy(logits: &DenseMatrix, targets: &[usize]) -> Result<(f64, DenseMatrix)> {
    let (n, c) = logits.shape();
    if targets.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {n} rows",
            targets.len()
        )));
    }
    let mut grad = DenseMatrix::zeros(n, c);
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= c {
            return Err(Error::InvalidArgument(format!(
                "target {t} out of range for {c} classes"
            )));
        }
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| libm::exp(v - max)).sum();
        let log_sum = libm::log(sum) + max;
        loss += log_sum - row[t];
        let g = grad.row_mut(r);
        for (j, v) in row.iter().enumerate() {
            g[j] = libm::exp(v - log_sum) / n as f64;
        }
        g[t] -= 1.0 / n as f64;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss"));
    }
    Ok((loss / n as f64, grad))
}

pub fn accuracy(logits: &DenseMatrix, targets: &[usize]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let correct = targets
        .iter()
        .enumerate()
        .filter(|(r, &t)| argmax(logits.row(*r)) == t)
        .count();
    correct as f64 / targets.len() as f64
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
