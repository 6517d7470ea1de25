//! Feedforward (dense + strided convolution) and vanilla recurrent networks
//! with exact gradients.

pub mod conv;
mod layer;
mod network;
mod optim;
mod rnn;

pub use conv::ConvGeometry;
pub use layer::{Activation, Layer, LayerKind, LayerSpec, ParamGrad};
pub use network::{
    accuracy, argmax, cifar_reference_specs, mlp_specs, softmax_cross_entropy, ForwardCache, Gradients, Network,
    NoisyOutput, Width,
};
pub use optim::{sgd_momentum_step, SgdMomentum};
pub use rnn::{Rnn, RnnGradients, RnnTrajectory};
