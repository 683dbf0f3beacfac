//! The toy experiment: datasets of rotated Fourier coefficient vectors, an
//! MLP encoder with exchangeable rotation heads, a group-action decoder, and
//! the training/evaluation pipeline around them.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod model;
pub mod train;

pub use config::{ExperimentConfig, ModelKind};
pub use dataset::{Dataset, DatasetMeta};
pub use eval::{evaluate, ResultRow, RESULTS_HEADER};
pub use model::Model;
pub use train::{train, TrainOutcome};
