//! Variance-exploding diffusion: noise schedule, denoisers, samplers, training.

pub mod checkpoint;
pub mod denoiser;
pub mod gaussian;
pub mod mlp;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use denoiser::{gaussian_denoise, Denoiser, GaussianPrior};
pub use gaussian::{gaussian_posterior_mean, pyramid_gaussian_priors, LinearGaussianPrior};
pub use mlp::{MlpConfig, MlpDenoiser, ModelMeta};
pub use sampler::{add_noise, ancestral_sample};
pub use schedule::NoiseSchedule;
pub use train::{train_denoiser, Optimizer, TrainConfig, TrainingExample};
