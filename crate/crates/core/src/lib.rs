//! Discriminative mutual-information estimation with f-divergence critics.
//!
//! The crate bundles a small dense-network engine ([`nn`]), the KL / GAN /
//! squared-Hellinger value functions ([`divergences`]), Gaussian benchmark
//! data with derangement-based marginal sampling ([`sampling`]), the
//! estimators themselves ([`estimators`]), closed-form ground truth
//! ([`oracle`]) and experiment drivers ([`bench`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the 64-bit width used by the experiments.

pub mod bench;
pub mod divergences;
pub mod error;
pub mod estimators;
pub mod nn;
pub mod oracle;
pub mod sampling;
pub mod scalar;

pub use divergences::DivergenceKind;
pub use error::{Error, Result};
pub use estimators::{ArchitectureKind, EstimatorKind, RunRecord, TrainConfig};
pub use nn::{AdamState, Matrix, Mlp, MlpConfig};
pub use oracle::GaussianOracle;
pub use sampling::{Batch, DataConfig, MarginalStrategy};
pub use scalar::Scalar;

pub type Matrix64 = Matrix<f64>;
pub type Mlp64 = Mlp<f64>;
pub type AdamState64 = AdamState<f64>;
pub type Batch64 = Batch<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Mlp32 = Mlp<f32>;
