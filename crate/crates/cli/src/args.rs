use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "cullsim",
    version,
    about = "Batch birth / bottom-cull evolution model: regimes, simulation, verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Critical probability, frontier and limiting regime.
    Regime(LawArgs),
    /// Run one replication and write its data files.
    Simulate(SimArgs),
    /// Run independent replications in parallel.
    Ensemble(EnsembleArgs),
    /// Run an ensemble at every point of a grid of birth probabilities.
    Sweep(SweepArgs),
    /// Tail of the ladder epoch of an auxiliary increment walk.
    Ladder(LadderArgs),
    /// Summarize the output directory of a simulate, ensemble or sweep run.
    Analyze(AnalyzeArgs),
    /// Compare the fast engine with the naive oracle on random configs.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct LawArgs {
    /// Birth probability per step.
    #[arg(long)]
    pub p: Option<f64>,
    /// Birth batch law (const:k, unif:a:b, geom:r, pois1:lambda, zeta:s).
    #[arg(long)]
    pub birth: Option<String>,
    /// Death batch law, same syntax.
    #[arg(long)]
    pub death: Option<String>,
    /// File of `key = value` lines; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Record,
}

impl Format {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Record => "record",
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct SimArgs {
    #[command(flatten)]
    pub laws: LawArgs,
    /// Number of steps (the horizon).
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Margin above the frontier for the emptying-event tracker.
    #[arg(long)]
    pub eps: Option<f64>,
    /// `geometric`, or a comma-separated list of step indices.
    #[arg(long)]
    pub checkpoints: Option<String>,
    /// Bound M on the death batch size (defaults to its supremum).
    #[arg(long)]
    pub bound_m: Option<u64>,
    /// Birth batches at least this large stay unrealized; `off` realizes all.
    #[arg(long)]
    pub lazy_min: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Do not write the final fitness snapshot.
    #[arg(long)]
    pub no_snapshot: bool,
    /// Skip the snapshot when the final population exceeds this size.
    #[arg(long)]
    pub snapshot_limit: Option<u64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub reps: Option<u64>,
    /// Worker threads (default: CULLSIM_THREADS, else all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SweepArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Grid of birth probabilities, `lo:hi:step`.
    #[arg(long)]
    pub p_grid: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WalkArg {
    /// Binomially thinned births against whole deaths; stops below 0.
    Frontier,
    /// Whole births against whole deaths; stops at or below 0.
    Total,
}

#[derive(Args, Debug, Clone)]
pub struct LadderArgs {
    #[command(flatten)]
    pub laws: LawArgs,
    /// Which walk to run [default: frontier].
    #[arg(long, value_enum)]
    pub walk: Option<WalkArg>,
    /// Thinning probability (default: the model's frontier).
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long)]
    pub n_max: Option<u64>,
    #[arg(long)]
    pub walks: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write the table to this file.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    /// Smallest checkpoint used in the gap-exponent fit.
    #[arg(long, default_value_t = cullsim::analysis::DEFAULT_N_MIN)]
    pub n_min: u64,
}

#[derive(Args, Debug, Clone)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 100)]
    pub configs: u64,
    #[arg(long, default_value_t = 10_000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
}
