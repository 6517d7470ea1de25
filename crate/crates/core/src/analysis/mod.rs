//! Comparison of pseudo-gradients with true gradients and with the closed-form
//! predictions for noise-correlation estimators.

mod alignment;
mod theory;

pub use alignment::{
    alpha_fraction, cosine, cosine_angle, projected_magnitude, pseudo_activation_gradients, step_alignment,
    AlignmentAccumulator, AlignmentRecord, AlignmentSummary, Space,
};
pub use theory::{
    cos2_asymptote, cos2_moments, empirical_cos2, feedback_fixed_point, noise_variance_identity_check, predicted_cos2,
    predicted_noise_variance, predicted_norm_ratio, predicted_projected_ratio, z_test_greater, Cos2Moments,
    FixedPointReport, FixedPointSetup,
};
