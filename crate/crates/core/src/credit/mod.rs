//! Feedback learning by noise correlation and its baselines: manifold (NMNC)
//! and isotropic (VNC) noise, DFA, InitJac initialisation and layerwise Weight
//! Mirror, plus the training loop that ties them to the forward weights.

mod feedback;
mod noise;
mod trainer;

pub use feedback::{
    apply_init_mode, feedback_update, forward_weight_update, init_jacobian_feedback, layer_noise_response,
    pseudo_error, weight_mirror_update, FeedbackInit,
};
pub use noise::{matched_sigma_vnc, sample_noise, NoiseDraw, NoiseMethod};
pub use trainer::{
    describe, manifold_states, rule_gradients, EpochMetrics, NoiseSharing, Rule, StepView, Trainer, TrainerConfig,
};

#[cfg(test)]
mod tests;
