//! Command-line pipeline around `pgdl_core`: synthetic data generation,
//! training, reconstruction, evaluation and K sweeps.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

pub use commands::{
    cmd_compare, cmd_evaluate, cmd_generate_data, cmd_reconstruct, cmd_train, output_path, Evaluation, Method,
    ReconManifest, TrainManifest,
};
pub use config::ExperimentConfig;
pub use dataset::{Dataset, Split};
pub use error::{CliError, Result};
