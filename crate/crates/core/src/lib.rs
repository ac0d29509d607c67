//! Model-based offline RL on a desk scale: probabilistic ensemble dynamics,
//! optimistic/pessimistic reward shaping, SAC and TD3+BC policies, and exact
//! least-squares value iteration on synthetic linear MDPs.

pub mod bytesio;
pub mod datasets;
pub mod dynamics;
pub mod envs;
pub mod eval;
pub mod lsvi;
pub mod numkit;
pub mod policies;
pub mod shaping;

use thiserror::Error;

/// Error type shared across the library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
