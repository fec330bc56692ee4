//! Minimal dense-network substrate: parameter storage, MLP forward
//! evaluation (plain and batched), reverse-mode gradients over a tape,
//! Adam updates, diagonal Gaussians and a finite-difference checker.

mod adam;
mod gaussian;
mod gradcheck;
mod matrix;
mod mlp;
mod tape;

pub use adam::{adam_step, adam_step_masked, AdamHyper, AdamState};
pub use gaussian::{gaussian_kl_to_standard, gaussian_log_prob, gaussian_sample, DiagGaussian};
pub use gradcheck::grad_check;
pub use matrix::{Grads, ParamId, ParamSet, RealMatrix};
pub use mlp::{
    elu, layer_norm, mlp_forward, mlp_forward_batch, mlp_forward_tape, LayerKind, LayerParams,
    LayerSpec, MlpParams, LAYER_NORM_EPS,
};
pub use tape::{Tape, Var};
