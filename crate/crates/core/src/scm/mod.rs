//! Discrete structural causal model over (Z, X, S, C, Y).
//!
//! Serves two purposes: it generates synthetic data whose context bias is
//! controlled by a single dial `β`, and it answers `P(Y|X)` and `P(Y|do(X))`
//! exactly, which makes it the ground truth for everything downstream.

mod query;
mod sample;
mod simulate;
mod spec;

pub use query::{
    exact_intervention, exact_likelihood, mean_confounding_gap, mutilated_intervention,
    total_variation,
};
pub use sample::{one_hot, sample_dataset, Regime, ScmRecord, SyntheticDataset};
pub use simulate::{simulate, Simulation, SplitSizes};
pub use spec::{build_scm, ScmConfig, ScmSpec, MAX_CARDINALITY};
