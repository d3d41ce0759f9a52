//! Dense network engine: matrices, ReLU MLPs, Adam and gradient checking.

mod adam;
mod gradcheck;
mod matrix;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use gradcheck::grad_check;
pub use matrix::Matrix;
pub use mlp::{
    ForwardCache, Gradients, HiddenActivation, Layer, Mlp, MlpConfig, OutputActivation, OUTPUT_CLAMP,
};
