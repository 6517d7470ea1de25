use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{channels_to_rows, col2im_batch, im2col_batch, rows_to_channels, ConvGeometry};
use crate::numerics::{gemm, DenseMatrix, Op, SeededRng};

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, s: f64) -> f64 {
        match self {
            Activation::Relu => s.max(0.0),
            Activation::Tanh => libm::tanh(s),
            Activation::Identity => s,
        }
    }

    /// Derivative with respect to the pre-activation. ReLU'(0) = 0.
    #[inline]
    pub fn derivative(self, s: f64) -> f64 {
        match self {
            Activation::Relu => {
                if s > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(s);
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> crate::Result<Self> {
        Ok(match s {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "identity" | "linear" => Activation::Identity,
            other => return Err(crate::Error::InvalidArgument(format!("unknown activation '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense { inputs: usize, outputs: usize },
    Conv2d(ConvGeometry),
}

/// Shape and nonlinearity of one layer. The last layer of a network is its
/// output layer and must use [`Activation::Identity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Dense { inputs, outputs },
            activation,
        }
    }

    pub fn conv(geometry: ConvGeometry, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Conv2d(geometry),
            activation,
        }
    }

    /// Flat input dimension.
    pub fn input_dim(&self) -> usize {
        match self.kind {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv2d(g) => g.input_len(),
        }
    }

    /// Flat output dimension `n_l` (channel-major for convolutions).
    pub fn output_dim(&self) -> usize {
        match self.kind {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv2d(g) => g.output_len(),
        }
    }

    /// Shape of the weight matrix: `outputs × inputs` or `out_channels × fan_in`.
    pub fn weight_shape(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => (outputs, inputs),
            LayerKind::Conv2d(g) => (g.out_channels, g.fan_in()),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight_shape().1
    }

    pub fn describe(&self) -> alloc::string::String {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => format!("dense {inputs}->{outputs} {}", self.activation.name()),
            LayerKind::Conv2d(g) => format!(
                "conv {}x{}x{}->{}x{}x{} k{} s{} p{} {}",
                g.in_channels,
                g.in_height,
                g.in_width,
                g.out_channels,
                g.out_height(),
                g.out_width(),
                g.kernel,
                g.stride,
                g.padding,
                self.activation.name()
            ),
        }
    }
}

/// A layer with parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

/// Weight and bias gradient of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl ParamGrad {
    pub fn zeros_like(layer: &Layer) -> Self {
        let (r, c) = layer.weight.shape();
        Self {
            weight: DenseMatrix::zeros(r, c),
            bias: vec![0.0; layer.bias.len()],
        }
    }

    /// Weight and bias entries concatenated.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.weight.as_slice().to_vec();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn scale(&mut self, s: f64) {
        self.weight.scale(s);
        self.bias.iter_mut().for_each(|b| *b *= s);
    }
}

impl Layer {
    /// PyTorch-style default initialisation: `U(-1/√fan_in, 1/√fan_in)` for
    /// weights and biases.
    pub fn init(spec: LayerSpec, rng: &mut SeededRng) -> Self {
        let (r, c) = spec.weight_shape();
        let bound = 1.0 / libm::sqrt(spec.fan_in() as f64);
        let weight = DenseMatrix::from_fn(r, c, |_, _| bound * (2.0 * rng.uniform() - 1.0));
        let bias = (0..r).map(|_| bound * (2.0 * rng.uniform() - 1.0)).collect();
        Self { spec, weight, bias }
    }

    pub fn zeros(spec: LayerSpec) -> Self {
        let (r, c) = spec.weight_shape();
        Self {
            spec,
            weight: DenseMatrix::zeros(r, c),
            bias: vec![0.0; r],
        }
    }

    /// `W x` for every row of `x` using the given weight (no bias).
    pub fn linear_with(&self, weight: &DenseMatrix, x: &DenseMatrix) -> DenseMatrix {
        match self.spec.kind {
            LayerKind::Dense { .. } => x.matmul_nt(weight),
            LayerKind::Conv2d(g) => {
                let cols = im2col_batch(&g, x);
                let out = weight.matmul(&cols);
                channels_to_rows(&out, x.rows(), g.positions())
            }
        }
    }

    /// Pre-activation `s = W x + b` for every row of `x`.
    pub fn pre_activation(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut s = self.linear_with(&self.weight, x);
        self.add_bias(&mut s);
        s
    }

    fn add_bias(&self, s: &mut DenseMatrix) {
        match self.spec.kind {
            LayerKind::Dense { .. } => s.add_row_broadcast(&self.bias),
            LayerKind::Conv2d(g) => {
                let p = g.positions();
                for r in 0..s.rows() {
                    let row = s.row_mut(r);
                    for (c, b) in self.bias.iter().enumerate() {
                        row[c * p..(c + 1) * p].iter_mut().for_each(|v| *v += b);
                    }
                }
            }
        }
    }

    pub fn activate(&self, s: &DenseMatrix) -> DenseMatrix {
        let act = self.spec.activation;
        s.map(|v| act.apply(v))
    }

    /// Gradient of `Σ_b ⟨delta_b, s_b⟩` with respect to weight and bias, where
    /// `delta` (rows × n_out) is the gradient at the pre-activation and
    /// `input` (rows × n_in) the layer input.
    pub fn weight_gradient(&self, delta: &DenseMatrix, input: &DenseMatrix) -> ParamGrad {
        match self.spec.kind {
            LayerKind::Dense { .. } => ParamGrad {
                weight: delta.matmul_tn(input),
                bias: delta.column_sums(),
            },
            LayerKind::Conv2d(g) => {
                let p = g.positions();
                let delta_c = rows_to_channels(delta, g.out_channels, p);
                let cols = im2col_batch(&g, input);
                let mut weight = DenseMatrix::zeros(g.out_channels, g.fan_in());
                gemm(1.0, &delta_c, Op::N, &cols, Op::T, 0.0, &mut weight);
                let bias = (0..g.out_channels).map(|c| delta_c.row(c).iter().sum()).collect();
                ParamGrad { weight, bias }
            }
        }
    }

    /// Gradient with respect to the layer input given the pre-activation
    /// gradient, routed through `weight` (the forward weight for exact
    /// backprop, or a feedback matrix of the same shape).
    pub fn input_gradient_with(&self, weight: &DenseMatrix, delta: &DenseMatrix) -> DenseMatrix {
        match self.spec.kind {
            LayerKind::Dense { .. } => delta.matmul(weight),
            LayerKind::Conv2d(g) => {
                let delta_c = rows_to_channels(delta, g.out_channels, g.positions());
                let cols = weight.matmul_tn(&delta_c);
                col2im_batch(&g, &cols, delta.rows())
            }
        }
    }

    pub fn input_gradient(&self, delta: &DenseMatrix) -> DenseMatrix {
        self.input_gradient_with(&self.weight, delta)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}
