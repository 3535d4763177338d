//! Synthetic data, training orchestration and experiment runs.

pub mod experiment;
pub mod models;
pub mod phantoms;
pub mod task;

pub use experiment::{load_dataset, run_experiment, save_dataset, write_experiment, AlgoResult, ExperimentConfig};
pub use models::{model_file, save_prior, solve, train_level, Algo, LevelTraining, ModelSet};
pub use phantoms::{generate_phantoms, PhantomKind, PhantomSpec};
pub use task::{augment, fit_gaussian_prior, level_examples, make_sr_task};
