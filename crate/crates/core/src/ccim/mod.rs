//! The contextual causal intervention module.
//!
//! Given a fused representation `h` and a confounder dictionary `Z`, the layer
//! computes
//!
//! ```text
//! out = W_h h + W_g E_z[g(z)],      E_z[g(z)] = Σ_i λ_i z_i P(z_i)
//! ```
//!
//! where `λ` is a softmax attention of `h` over the prototypes, either
//! dot-product (`(W_q h)ᵀ(W_k z_i) / sqrt(d)`) or additive
//! (`W_tᵀ tanh(W_q h + W_k z_i)`). The output feeds the task classifier.

mod forward;
mod gradcheck;
mod params;

pub use forward::{
    attention_additive, attention_dot, attention_scores, backward_batch, confounder_expectation,
    forward, forward_batch, softmax, BatchForward, CcimOutput,
};
pub use gradcheck::{
    check_gradients, relative_error, ConstantLoss, GradientReport, OutputLoss, ParamCheck,
    QuadraticLoss, FD_STEP, REL_ERROR_FLOOR,
};
pub use params::{
    AttentionVariant, CcimDims, CcimFlags, CcimGrads, CcimParams, ScoreScale, DEFAULT_D_M,
    DEFAULT_D_N, PARAMS_MAGIC,
};

#[cfg(test)]
mod tests;
