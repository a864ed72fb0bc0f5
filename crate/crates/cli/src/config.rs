//! Resolved run configurations. Every run echoes its configuration as
//! `config.json`; `ccim replay` re-executes one.

use std::path::{Path, PathBuf};

use ccim_core::confounder::Clusterer;
use ccim_core::scm::{ScmConfig, SplitSizes};
use ccim_core::trainer::TrainConfig;
use ccim_core::Split;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Frozen seeded random projection followed by tanh.
    RandomProj,
    /// Precomputed features looked up by sample id.
    ExternalFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// The template configuration alone.
    Single,
    /// Vanilla plus every attention variant × λ × prior combination.
    Variants,
    /// Full cross product of head, variant, λ, prior, dictionary and masking.
    Full,
    /// Vanilla plus CCIM at each dictionary size of the sweep.
    NSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    /// SCM shape and noise knobs; its `seed` is derived from the root seed.
    pub scm: ScmConfig,
    pub sizes: SplitSizes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub manifest: PathBuf,
    /// Class index whose presence defines the positive subset.
    pub target: usize,
    pub top_k: Option<usize>,
    /// Restrict to one split; all splits when absent.
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildDictConfig {
    pub manifest: PathBuf,
    pub split: Split,
    pub encoder: EncoderKind,
    /// Feature file for the external-file encoder.
    pub features: Option<PathBuf>,
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    pub clusterer: Clusterer,
    pub mask: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub manifest: PathBuf,
    pub train: TrainConfig,
    pub mask: bool,
    /// Prebuilt dictionary replacing the one built during training.
    pub dict: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub model: PathBuf,
    pub manifest: PathBuf,
    pub split: Split,
    pub mask: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateConfig {
    pub manifest: PathBuf,
    pub grid: GridKind,
    pub template: TrainConfig,
    pub mask: bool,
    pub n_sweep: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Simulate(SimulateConfig),
    Audit(AuditConfig),
    BuildDict(BuildDictConfig),
    Train(TrainRunConfig),
    Eval(EvalConfig),
    Ablate(AblateConfig),
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Simulate(_) => "simulate",
            RunConfig::Audit(_) => "audit",
            RunConfig::BuildDict(_) => "build-dict",
            RunConfig::Train(_) => "train",
            RunConfig::Eval(_) => "eval",
            RunConfig::Ablate(_) => "ablate",
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::new("cli", ccim_core::Error::Io {
                context: format!("reading config {}", path.display()),
                source: e,
            })
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::new(
                "cli",
                ccim_core::Error::Config(format!("config {}: {e}", path.display())),
            )
        })
    }
}
