//! Confounder dictionary construction: mask the subject, encode the remaining
//! context, cluster the features, and keep each cluster's mean together with
//! its share of the training set.

mod cluster;
mod dictionary;
mod encoder;
mod mask;

pub use cluster::{
    cluster_rows, kmeans_pp, kmeans_pp_rows, kmedoids, kmedoids_rows, Clusterer, Clustering,
    MAX_ITERATIONS,
};
pub use dictionary::{
    build_dictionary, build_dictionary_with, random_dictionary, ConfounderDictionary,
    DICTIONARY_MAGIC,
};
pub use encoder::{
    extract_context_features, ContextEncoder, ExternalFileEncoder, IdentityEncoder,
    RandomProjectionEncoder,
};
pub use mask::{mask_sample, mask_subject, ContextImage};

/// Default dictionary size per corpus family.
pub mod defaults {
    pub const FEATURE_DIM: usize = 2048;
    pub const N_EMOTIC: usize = 256;
    pub const N_CAER_S: usize = 128;
    pub const N_GROUPWALK: usize = 256;
    pub const N_SYNTHETIC: usize = 16;
}
