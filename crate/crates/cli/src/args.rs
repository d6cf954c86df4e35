use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kgcp_core::eval::{Directions, Setting};
use kgcp_core::io::UnseenPolicy;
use kgcp_core::{LossFamily, Precision};

#[derive(Debug, Parser)]
#[command(name = "kgcp", version, about = "CP-decomposition knowledge-graph embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train embeddings on a dataset directory.
    Train(TrainArgs),
    /// Rank test (or validation) triples with a trained artifact.
    Eval(EvalArgs),
    /// Write an artifact as TSV, or re-encode it at another float width.
    Export(ExportArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
    /// Compare analytic gradients with finite differences and a dense oracle.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Extend,
    Strict,
    Lenient,
}

impl From<PolicyArg> for UnseenPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Extend => UnseenPolicy::Extend,
            PolicyArg::Strict => UnseenPolicy::Strict,
            PolicyArg::Lenient => UnseenPolicy::Lenient,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionsArg {
    Both,
    Tail,
}

impl From<DirectionsArg> for Directions {
    fn from(d: DirectionsArg) -> Self {
        match d {
            DirectionsArg::Both => Directions::Both,
            DirectionsArg::Tail => Directions::TailOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Bernoulli,
    Gaussian,
}

impl From<FamilyArg> for LossFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Bernoulli => LossFamily::Bernoulli,
            FamilyArg::Gaussian => LossFamily::Gaussian,
        }
    }
}

/// Hyperparameter sources, applied in order: defaults, `--config` file,
/// `--set` pairs, then the dedicated flags.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. `--set rank=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Embedding size R.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Positive triples per step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Corruptions sampled per positive.
    #[arg(long)]
    pub n_negatives: Option<usize>,
    /// Decoupled weight decay.
    #[arg(long)]
    pub l2_coeff: Option<f64>,
    /// Number of training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seed for initialization, shuffling and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Float width of the stored factors.
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// Single-threaded, bitwise reproducible training.
    #[arg(long, conflicts_with = "parallel")]
    pub deterministic: bool,
    /// Spread gradient computation over all cores.
    #[arg(long)]
    pub parallel: bool,
    /// Reject corruptions that are known training triples.
    #[arg(long)]
    pub filtered_negatives: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with train.txt, valid.txt and test.txt.
    #[arg(long, value_name = "DIR", required_unless_present = "from_manifest")]
    pub data: Option<PathBuf>,
    /// Output directory for artifacts and the run manifest.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Overwrite an existing non-empty output directory.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Rank the validation split every N epochs and keep the best checkpoint.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub validate_every: usize,
    /// Evaluate the final model on the test split.
    #[arg(long)]
    pub eval_test: bool,
    /// Handling of validation/test labels unseen in training.
    #[arg(long, value_enum, default_value = "extend")]
    pub policy: PolicyArg,
    /// Re-run the configuration and dataset recorded in a manifest and
    /// check that the artifact digest matches.
    #[arg(long, value_name = "FILE")]
    pub from_manifest: Option<PathBuf>,
    /// Emit telemetry and results as JSON lines.
    #[arg(long)]
    pub json_lines: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained `.kge` artifact; labels are read from its sibling files.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Rank without removing other known completions.
    #[arg(long)]
    pub unfiltered: bool,
    #[arg(long, value_enum, default_value = "both")]
    pub directions: DirectionsArg,
    /// Evaluate the validation split instead of the test split.
    #[arg(long)]
    pub valid: bool,
    #[arg(long, value_enum, default_value = "extend")]
    pub policy: PolicyArg,
    #[arg(long)]
    pub json_lines: bool,
}

impl EvalArgs {
    pub fn setting(&self) -> Setting {
        if self.unfiltered {
            Setting::Unfiltered
        } else {
            Setting::Filtered
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExportFormat {
    /// `label<TAB>v1<TAB>v2…`, one file per matrix.
    Tsv,
    /// A `.kge` artifact, optionally at another float width.
    Kge,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Output directory (tsv) or artifact path (kge).
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "tsv")]
    pub format: ExportFormat,
    /// Float width of a re-encoded artifact.
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "extend")]
    pub policy: PolicyArg,
    #[arg(long)]
    pub json_lines: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Tensor shape `ENTITIESxRELATIONSxENTITIES`; both entity axes must agree.
    #[arg(long, default_value = "20x5x20")]
    pub dims: String,
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    /// Fraction of coordinates observed.
    #[arg(long, default_value_t = 0.2)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "bernoulli")]
    pub family: FamilyArg,
}
