use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "softcrowd", version, about = "Crowd-sourced soft labels: generate, collect, aggregate, train, evaluate, compare")]
pub struct Cli {
    /// Overrides the seed in the command's config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config for the command (must carry `"version": 1`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to `<data root>/<command>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Default data root.
    #[arg(long, global = true, env = "SOFTCROWD_DATA_DIR", default_value = "softcrowd-data")]
    pub data_root: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with truth, counts and a subject split.
    Gen,
    /// Run the annotation service until interrupted.
    Serve(ServeArgs),
    /// Drive simulated annotators against an embedded or live service.
    Simulate(SimulateArgs),
    /// Turn an event log or count table into counts, soft targets and consensus.
    Aggregate(AggregateArgs),
    /// Coverage histograms and consensus agreement for a count table.
    Analyze(AnalyzeArgs),
    /// Train a classifier on hard or soft labels.
    Train(TrainArgs),
    /// Score a model on the held-out subjects.
    Eval(EvalArgs),
    /// Two-sample t-test on the per-item L1 values of two reports.
    Compare(CompareArgs),
    /// Apply a CSV of review verdicts.
    Review(ReviewArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Serve(_) => "serve",
            Command::Simulate(_) => "simulate",
            Command::Aggregate(_) => "aggregate",
            Command::Analyze(_) => "analyze",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Compare(_) => "compare",
            Command::Review(_) => "review",
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Static files served under /assets (e.g. a built annotator UI).
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Corpus directory; defaults to `<data root>/gen`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Base URL of a running service; embedded when absent.
    #[arg(long)]
    pub url: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolArg {
    /// Every label in the log.
    Raw,
    /// Workers not excluded.
    All,
    /// Promoted workers only.
    Filtered,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Service event log (events.jsonl).
    #[arg(long, conflicts_with = "counts", required_unless_present = "counts")]
    pub log: Option<PathBuf>,
    /// Count table instead of a log.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Campaign to aggregate; defaults to the only one in the log.
    #[arg(long)]
    pub campaign: Option<String>,
    #[arg(long, value_enum, default_value = "all")]
    pub pool: PoolArg,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Count table CSV.
    pub counts: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.9])]
    pub thresholds: Vec<f64>,
    /// Manifest with posed labels; otherwise parsed from item ids when possible.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Hard,
    Soft,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory; defaults to `<data root>/gen`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Overrides `train.label_mode`.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Count table for soft targets; defaults to the corpus counts.csv.
    #[arg(long)]
    pub counts: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgainstArg {
    /// The generator's true distributions.
    Truth,
    /// Normalized vote counts.
    Counts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Test,
    Train,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// model.json written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "counts")]
    pub against: AgainstArg,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Count table for `--against counts`; defaults to the corpus counts.csv.
    #[arg(long)]
    pub counts: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Pooled,
    Welch,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// metrics.json of model A.
    pub report_a: Option<PathBuf>,
    /// metrics.json of model B.
    pub report_b: Option<PathBuf>,
    /// `mean,sd,n` for one group; give twice instead of reports.
    #[arg(long, num_args = 1, conflicts_with_all = ["report_a", "report_b"])]
    pub summary: Vec<String>,
    #[arg(long, value_enum, default_value = "pooled")]
    pub variant: VariantArg,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    /// CSV with header reviewer_id,worker_id,item_id,verdict.
    pub reviews: PathBuf,
    /// Service data directory; defaults to `<data root>/serve`.
    #[arg(long, conflicts_with = "url")]
    pub service_dir: Option<PathBuf>,
    /// Base URL of a running service.
    #[arg(long)]
    pub url: Option<String>,
}
