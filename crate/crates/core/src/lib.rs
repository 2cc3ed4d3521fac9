//! Sparse Tucker decomposition trained by batched stochastic gradient descent.
//!
//! The core tensor is kept in Kruskal form, and the large intermediate
//! matrices of the gradient derivation are never materialized; every update
//! works on one observed entry at a time.

pub mod config;
pub mod core_opt;
pub mod error;
pub mod eval;
pub mod factor_opt;
pub mod model;
pub mod scheduler;
pub mod sgd;
pub mod sptensor;
pub mod synthetic;
pub mod train;

pub use config::HyperParams;
pub use error::{Error, Result};
pub use eval::EpochMetrics;
pub use model::{KruskalCore, Matrix, Ranks, TuckerModel};
pub use scheduler::{Balance, ParallelPlan, Strategy};
pub use sptensor::{CooTensor, Shape};
pub use train::Trainer;
