//! Analytic diffusion oracle: a Gaussian-mixture data distribution with an
//! exact noise predictor, its Jacobian, exact likelihoods and exact
//! color-conditional posteriors.

mod demo;
mod denoiser;
mod mixture;
mod posterior;

pub use demo::{random_mixture, DemoMixtureSpec};
pub use denoiser::{Denoiser, ExactDenoiser, PerturbedDenoiser};
pub use mixture::{Component, Covariance, MixtureModel};
pub use posterior::{default_observation_noise, exact_color_posterior, operator_matrix};
