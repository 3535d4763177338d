//! Posterior samplers for `y = H x + z`: DiffPIR, DPS and the scale cascade.

pub mod cascade;
pub mod config;
pub mod cost;
pub mod diffpir;
pub mod dps;

pub use cascade::{cascade_solve, conditioned_sr, steps_per_level, CascadeSpec};
pub use config::SamplerConfig;
pub use cost::{cascade_stages, flop_estimate, level_stages, single_scale_stages, StageCost};
pub use diffpir::diffpir_solve;
pub use dps::{dps_gradient, dps_solve};
