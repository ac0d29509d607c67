//! Dense numerics substrate: matrices, ridge regression, seeded random
//! streams, a minimal MLP with manual backpropagation and Adam, and a
//! finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod rng;

pub use adam::{AdamConfig, AdamState, ScalarAdam};
pub use gradcheck::grad_check;
pub use linalg::{ridge_solve, Cholesky};
pub use loss::{
    gaussian_nll, mlp_train_step, sigmoid, soft_clamp, soft_clamp_deriv, softplus, LossSpec,
    LOG_STD_MAX, LOG_STD_MIN,
};
pub use matrix::{axpy, dot, norm2, Matrix};
pub use mlp::{DenseLayer, ForwardCache, Gradients, MlpNetwork};
pub use rng::Rng;
