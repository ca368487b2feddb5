//! The `salbfgs` command line: argument definitions, dispatch and exit codes.

mod commands;
pub mod model_file;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use salbfgs_core::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const IO: i32 = 2;
    pub const OPTIMIZER: i32 = 3;
    pub const SEQUENCING: i32 = 4;
    pub const ONE_CLASS: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "salbfgs", version, about = "Adaptive L-BFGS training on batch streams")]
pub struct Cli {
    /// Worker threads for cost evaluation (0 = one per core). Never changes results.
    #[arg(long, default_value_t = 0, global = true)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full-batch L-BFGS over every batch in the directory.
    Train(TrainArgs),
    /// Adaptive retraining, one batch at a time.
    Stream(StreamArgs),
    /// AUC and error rates of a model on labelled data.
    Eval(EvalArgs),
    /// Writes a synthetic drifting logistic stream.
    Synth(SynthArgs),
    /// Least squares with a forgetting factor over the stream.
    LsStream(LsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Logistic,
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MismatchArg {
    Absolute,
    Thresholded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PastEvalArg {
    Reservoir,
    Exact,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory of batch_NNNNN.txt files.
    #[arg(long)]
    pub batch_dir: PathBuf,
    /// Hash namespaced input into 2^bits features.
    #[arg(long)]
    pub hash_bits: Option<u8>,
    /// Namespace pair `a:b` to cross when hashing; repeatable.
    #[arg(long = "cross", value_name = "A:B")]
    pub cross: Vec<String>,
    /// Parameter dimension for indexed input (default: inferred from the data).
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    #[arg(long, value_enum, default_value_t = LossArg::Logistic)]
    pub loss: LossArg,
    /// Strength of the ½|θ|² regularizer.
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    pub l2: f64,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizerArgs {
    /// Curvature pairs kept by L-BFGS.
    #[arg(long, default_value_t = 10)]
    pub memory: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Stop when the largest gradient component falls below this.
    #[arg(long, allow_negative_numbers = true, default_value_t = 1e-6)]
    pub grad_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    #[command(flatten)]
    pub opt: OptimizerArgs,
    /// Train on batches 0..=T only.
    #[arg(long, value_name = "T")]
    pub last_batch: Option<usize>,
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    /// Report wall time as 0 so outputs are byte-reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct StreamArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    #[command(flatten)]
    pub opt: OptimizerArgs,
    /// Cap on new-batch examples per retrain.
    #[arg(long, default_value_t = 100_000)]
    pub m_max: usize,
    /// Floor on old examples per retrain.
    #[arg(long, default_value_t = 100)]
    pub m_old_min: usize,
    /// Capacity of the uniform sample of past examples.
    #[arg(long, default_value_t = 20_000)]
    pub reservoir: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = MismatchArg::Absolute)]
    pub mismatch_mode: MismatchArg,
    /// Where the past term of the mismatch is evaluated after a retrain.
    #[arg(long, value_enum, default_value_t = PastEvalArg::Reservoir)]
    pub past_eval: PastEvalArg,
    /// Drop curvature pairs before each retrain.
    #[arg(long)]
    pub reset_memory: bool,
    /// Scale subsampled losses up to the sizes of their pools.
    #[arg(long)]
    pub reweight: bool,
    /// Independent subsample-and-retrain runs per retrained batch.
    #[arg(long, value_name = "K")]
    pub parallel_samplings: Option<usize>,
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model_in: PathBuf,
    /// Batch directory to score.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub batch_dir: Option<PathBuf>,
    /// Single example file to score.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LossArg::Logistic)]
    pub loss: LossArg,
    /// Defaults to the bits recorded in the model file.
    #[arg(long)]
    pub hash_bits: Option<u8>,
    #[arg(long = "cross", value_name = "A:B")]
    pub cross: Vec<String>,
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub batch_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 10)]
    pub batches: usize,
    #[arg(long, default_value_t = 1000)]
    pub batch_size: usize,
    /// Drift event `T:FRACTION`: flip the sign of that fraction of the true weights at batch T.
    #[arg(long = "drift", value_name = "T:FRACTION")]
    pub drifts: Vec<String>,
    /// Nonzero features per example.
    #[arg(long, default_value_t = 10)]
    pub sparsity: usize,
    /// Standard deviation of the true margin.
    #[arg(long, allow_negative_numbers = true, default_value_t = 3.0)]
    pub weight_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct LsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Forgetting factor; 1 weighs all batches equally, 0 keeps only the newest.
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    pub mu: f64,
    /// Solve with a small diagonal jitter instead of failing on singular systems.
    #[arg(long)]
    pub ridge: bool,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => exit::USAGE,
            Failure::Core(e) => match e {
                Error::InvalidConfig(_) => exit::USAGE,
                Error::Io { .. }
                | Error::Parse { .. }
                | Error::InvalidInput(_)
                | Error::DimensionMismatch { .. }
                | Error::Empty(_) => exit::IO,
                Error::LineSearchFailed { .. }
                | Error::NotConverged { .. }
                | Error::Singular { .. }
                | Error::NonFinite(_)
                | Error::SampleSize { .. } => exit::OPTIMIZER,
                Error::Sequencing { .. } => exit::SEQUENCING,
                Error::OneClass => exit::ONE_CLASS,
            },
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return exit::USAGE;
        }
    };
    match pool.install(|| commands::dispatch(&cli.command)) {
        Ok(()) => exit::OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
