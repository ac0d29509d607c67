//! Library side of the experiment CLI: configuration, run orchestration,
//! and the small statistics helpers the acceptance checks share.

pub mod config;
pub mod experiment;

pub use config::{ExperimentConfig, Preset};
pub use experiment::{
    collect_dataset, run_experiment, sign_test_p, spearman, train_dynamics, uncertainty_grid,
    PretrainedParts, RunSummary,
};
