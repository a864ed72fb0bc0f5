use serde::{Deserialize, Serialize};

use super::sample::{sample_dataset, Regime, SyntheticDataset};
use super::spec::{build_scm, ScmConfig, ScmSpec};
use crate::error::Result;
use crate::rng::{stage_seed, Stage};

/// Split sizes of a simulated corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train: 20_000,
            val: 2_000,
            test: 5_000,
        }
    }
}

/// An SCM with biased train/val splits and a deconfounded test split.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub scm: ScmSpec,
    pub train: SyntheticDataset,
    pub val: SyntheticDataset,
    pub test: SyntheticDataset,
}

/// Builds the SCM and all three splits from one root seed. The CPT seed in
/// `base` is replaced by the root's `ScmBuild` stage seed.
pub fn simulate(base: &ScmConfig, root_seed: u64, sizes: SplitSizes) -> Result<Simulation> {
    let config = ScmConfig {
        seed: stage_seed(root_seed, Stage::ScmBuild),
        ..*base
    };
    let scm = build_scm(&config)?;
    let train = sample_dataset(&scm, sizes.train, stage_seed(root_seed, Stage::SampleTrain), Regime::Biased)?;
    let val = sample_dataset(&scm, sizes.val, stage_seed(root_seed, Stage::SampleVal), Regime::Biased)?;
    let test = sample_dataset(
        &scm,
        sizes.test,
        stage_seed(root_seed, Stage::SampleTest),
        Regime::Deconfounded,
    )?;
    Ok(Simulation { scm, train, val, test })
}
