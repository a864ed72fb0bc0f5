//! Context-deconfounded training toolkit.
//!
//! * [`confounder`] builds the dictionary of context prototypes.
//! * [`ccim`] is the intervention layer `W_h h + W_g E_z[g(z)]`.
//! * [`scm`] is an exact discrete causal model used as ground truth.
//! * [`trainer`] wraps a two-branch subject/context classifier around it.
//! * [`metrics`] holds AP/F1/AAE/Jaccard and the conditional-entropy audit.

mod binio;
pub mod ccim;
pub mod confounder;
pub mod error;
pub mod features;
pub mod manifest;
pub mod metrics;
pub mod rng;
pub mod scm;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
pub use features::{read_feature_set, write_feature_set};
pub use manifest::load_manifest;
pub use types::{BoundingBox, FeatureSet, Grid, LabelMode, LabelSet, Sample, SampleInput, Split};
