//! Scale-cascaded diffusion posterior sampling for super-resolution.
//!
//! Images are decomposed into Laplacian pyramid levels, each level gets its
//! own diffusion prior (conditioned on the coarser levels), and
//! super-resolution runs a proximal posterior sampler level by level from
//! coarse to fine. Analytic Gaussian denoisers and dense operator solves
//! provide exact oracles for every stage.

pub mod diffusion;
pub mod error;
pub mod field;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod operators;
pub mod posterior;
pub mod pyramid;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use field::{Field, Shape};
pub use rng::Rng;
