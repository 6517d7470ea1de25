//! Weight-perturbation gradient estimators: perturbation families, the
//! antithetic estimator, its Monte-Carlo error analysis, and RNN training.

mod estimator;
mod train;

pub use estimator::{
    antithetic_estimate, draw_perturbation, mse_closed_form, mse_oracle, rescale, second_moment, FactorSide,
    MseEstimate, PerturbationFamily,
};
pub use train::{GradientAlignment, RnnMethod, WpConfig, WpStepReport, WpTrainer};

#[cfg(test)]
mod tests;
