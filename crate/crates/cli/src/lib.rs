//! `ccim` command-line front end.
//!
//! Every subcommand writes into a fresh `--out` directory and echoes its
//! resolved configuration as `config.json`, which `ccim replay` re-executes.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use ccim_core::ccim::{AttentionVariant, ScoreScale};
use ccim_core::confounder::Clusterer;
use ccim_core::scm::{ScmConfig, SplitSizes};
use ccim_core::trainer::{LossMode, TrainConfig};
use ccim_core::Split;
use clap::{Args, Parser, Subcommand};

pub use commands::{execute, CONFIG_FILE};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use output::OutDir;

#[derive(Debug, Parser)]
#[command(name = "ccim", version, about = "Context-deconfounded training toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample train/val/test splits from a synthetic causal model.
    Simulate(SimulateArgs),
    /// Conditional-entropy audit of a target class across contexts.
    Audit(AuditArgs),
    /// Build a confounder dictionary from a manifest split.
    BuildDict(BuildDictArgs),
    /// Train a vanilla or CCIM model.
    Train(TrainArgs),
    /// Evaluate a trained model on a manifest split.
    Eval(EvalArgs),
    /// Train and evaluate every cell of an ablation grid.
    Ablate(AblateArgs),
    /// Re-execute a recorded `config.json`.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(format!("unknown split `{other}` (train | val | test)")),
    }
}

fn parse_score_scale(s: &str) -> Result<ScoreScale, String> {
    match s {
        "prototype-dim" => Ok(ScoreScale::PrototypeDim),
        "attention-dim" => Ok(ScoreScale::AttentionDim),
        other => Err(format!("unknown score scale `{other}` (prototype-dim | attention-dim)")),
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Strength of the confounder-to-subject alignment, in [0, 1].
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 2_000)]
    pub n_val: usize,
    #[arg(long, default_value_t = 5_000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 16)]
    pub n_z: usize,
    #[arg(long, default_value_t = 16)]
    pub n_x: usize,
    #[arg(long, default_value_t = 16)]
    pub n_s: usize,
    #[arg(long, default_value_t = 16)]
    pub n_c: usize,
    #[arg(long, default_value_t = 4)]
    pub n_y: usize,
    #[arg(long, default_value_t = 0.8)]
    pub alpha_s: f64,
    #[arg(long, default_value_t = 0.6)]
    pub alpha_c: f64,
    #[arg(long, default_value_t = 0.9)]
    pub alpha_y: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Class index defining the positive subset.
    #[arg(long)]
    pub target: usize,
    /// Keep only the most frequent contexts.
    #[arg(long, default_value_t = 200)]
    pub top_k: usize,
    /// Audit every context instead of the top-k.
    #[arg(long, conflicts_with = "top_k")]
    pub all_contexts: bool,
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BuildDictArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_split, default_value = "train")]
    pub split: Split,
    #[arg(long, value_enum, default_value = "random-proj")]
    pub encoder: config::EncoderKind,
    /// Feature file for the external-file encoder.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Number of prototypes.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Feature width of the random-projection encoder.
    #[arg(long, default_value_t = 2048)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = |s: &str| s.parse::<Clusterer>(), default_value = "kmeans-pp")]
    pub clusterer: Clusterer,
    /// Encode the full image instead of masking the subject box.
    #[arg(long)]
    pub no_mask: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Training knobs shared by `train` and `ablate`.
#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Loss; defaults to the one matching the label mode.
    #[arg(long, value_parser = |s: &str| s.parse::<LossMode>())]
    pub loss: Option<LossMode>,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    /// Use the CCIM head instead of the vanilla head.
    #[arg(long, overrides_with = "no_ccim")]
    pub ccim: bool,
    /// Use the vanilla head (the default).
    #[arg(long, overrides_with = "ccim")]
    pub no_ccim: bool,
    #[arg(long, value_parser = |s: &str| s.parse::<AttentionVariant>(), default_value = "dot")]
    pub variant: AttentionVariant,
    /// Treat every attention weight as 1.
    #[arg(long)]
    pub no_lambda: bool,
    /// Treat every prototype prior as 1.
    #[arg(long)]
    pub no_prior: bool,
    /// Replace the clustered dictionary with Gaussian prototypes.
    #[arg(long)]
    pub random_dict: bool,
    #[arg(long, default_value_t = 16)]
    pub n_clusters: usize,
    #[arg(long, default_value_t = 2048)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub d_m: usize,
    #[arg(long, default_value_t = 256)]
    pub d_n: usize,
    #[arg(long, value_parser = parse_score_scale, default_value = "prototype-dim")]
    pub score_scale: ScoreScale,
}

impl TrainFlags {
    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed: self.seed,
            loss: self.loss,
            hidden: self.hidden,
            ccim: self.ccim && !self.no_ccim,
            variant: self.variant,
            use_lambda: !self.no_lambda,
            use_prior: !self.no_prior,
            random_dictionary: self.random_dict,
            n_clusters: self.n_clusters,
            feature_dim: self.feature_dim,
            d_m: self.d_m,
            d_n: self.d_n,
            score_scale: self.score_scale,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Prebuilt dictionary (from `build-dict`) for the CCIM head.
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Feed the full image to the context branch instead of masking the subject.
    #[arg(long)]
    pub no_mask: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub no_mask: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "variants")]
    pub grid: config::GridKind,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub no_mask: bool,
    /// Dictionary sizes for the n-sweep grid.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64")]
    pub n_sweep: Vec<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A `config.json` written by an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

impl Command {
    /// Resolves the arguments into a run configuration plus output options.
    pub fn resolve(self) -> CliResult<(RunConfig, OutArgs)> {
        Ok(match self {
            Command::Simulate(a) => {
                let scm = ScmConfig {
                    n_z: a.n_z,
                    n_x: a.n_x,
                    n_s: a.n_s,
                    n_c: a.n_c,
                    n_y: a.n_y,
                    beta: a.beta,
                    alpha_s: a.alpha_s,
                    alpha_c: a.alpha_c,
                    alpha_y: a.alpha_y,
                    ..ScmConfig::default()
                };
                let sizes = SplitSizes { train: a.n, val: a.n_val, test: a.n_test };
                (RunConfig::Simulate(config::SimulateConfig { seed: a.seed, scm, sizes }), a.out)
            }
            Command::Audit(a) => (
                RunConfig::Audit(config::AuditConfig {
                    manifest: a.manifest,
                    target: a.target,
                    top_k: (!a.all_contexts).then_some(a.top_k),
                    split: a.split,
                }),
                a.out,
            ),
            Command::BuildDict(a) => (
                RunConfig::BuildDict(config::BuildDictConfig {
                    manifest: a.manifest,
                    split: a.split,
                    encoder: a.encoder,
                    features: a.features,
                    n: a.n,
                    dim: a.dim,
                    seed: a.seed,
                    clusterer: a.clusterer,
                    mask: !a.no_mask,
                }),
                a.out,
            ),
            Command::Train(a) => (
                RunConfig::Train(config::TrainRunConfig {
                    manifest: a.manifest,
                    train: a.train.to_config(),
                    mask: !a.no_mask,
                    dict: a.dict,
                }),
                a.out,
            ),
            Command::Eval(a) => (
                RunConfig::Eval(config::EvalConfig {
                    model: a.model,
                    manifest: a.manifest,
                    split: a.split,
                    mask: !a.no_mask,
                }),
                a.out,
            ),
            Command::Ablate(a) => (
                RunConfig::Ablate(config::AblateConfig {
                    manifest: a.manifest,
                    grid: a.grid,
                    template: a.train.to_config(),
                    mask: !a.no_mask,
                    n_sweep: a.n_sweep,
                }),
                a.out,
            ),
            Command::Replay(a) => (RunConfig::load(&a.config)?, a.out),
        })
    }
}

/// Resolves and executes one invocation.
pub fn run_command(command: Command) -> CliResult<()> {
    let (config, out) = command.resolve()?;
    let dir = OutDir::prepare(&out.out, out.force)?;
    execute(&config, &dir)
}

/// Parses `argv` and runs it. Returns the process exit code: 0 on success,
/// 1 on a domain error, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            1
        }
    }
}
