//! Reparameterizable probability distributions on the rotation group SO(3),
//! real Wigner-D group-action decoding, a continuity metric for learned
//! embeddings, and a small auto-encoder/VAE harness over the toy dataset
//! W(R) v, together with the CLI wiring.

pub mod autodiff;
pub mod cli;
pub mod contmetric;
pub mod experiment;
pub mod gauss;
pub mod heads;
pub mod so3;
pub mod wigner;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("matrix is not a rotation: {0}")]
    InvalidRotation(String),
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("density is singular on the identity coset (theta = {0:.3e})")]
    SingularDensity(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
