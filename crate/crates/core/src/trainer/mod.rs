//! Two-branch recognition model with an optional CCIM head, and the
//! training and evaluation loops around it.

mod data;
mod evaluate;
mod model;
mod train;

pub use data::{Targets, TrainData};
pub use evaluate::{evaluate, Scorer, DEFAULT_THRESHOLD};
pub use model::{
    fuse, BaselineModel, CcimHead, Dense, DenseGrads, Head, ModelGrads, DEFAULT_HIDDEN,
    MODEL_MAGIC,
};
pub use train::{
    build_model, context_encoder, dataset_loss, dictionary_for, loss_and_grad, train, EpochRecord, LossMode,
    TrainConfig, TrainOutcome,
};
