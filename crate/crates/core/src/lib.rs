//! Exact leave-one-out influence and the three TRAK approximations to it
//! (linearization, approximate leave-one-out, random projection), plus the
//! synthetic and CIFAR experiment pipelines used to compare them.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod influence;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    gradient_matrix, loss_derivatives, model_gradient, predict, predict_all, Activation, Dataset, GradientMatrix,
    LossDerivatives, LossKind, ModelKind, ModelSpec,
};
pub use solver::{build_linearized, fit_erm, fit_linearized, fit_loo, FitResult, LinearizedProblem, SolverOptions};
