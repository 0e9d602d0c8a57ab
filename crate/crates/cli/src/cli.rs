use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qualrank_core::estimator::ModelVariant;
use qualrank_core::Mode;

#[derive(Debug, Parser)]
#[command(name = "qualrank", version, about = "Position-bias-corrected quality estimation for ranked voting lists")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Random seed; required by `simulate`, fold seed for `evaluate`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with the command's settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all outputs; created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    Aggregator,
    Musiclab,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Rule {
    Hn,
    Reddit,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a ranked list (observations.jsonl) or a MusicLab experiment.
    Simulate(SimulateArgs),
    /// Fit a model to an observation file and write fit.json.
    Fit(FitArgs),
    /// Quality scores from a fit.
    Quality(QualityArgs),
    /// Cross-validated accuracy and model comparison.
    Evaluate(EvaluateArgs),
    /// Recover true vote counts from fuzzed ones.
    Defuzz(DefuzzArgs),
    /// Final scores of articles by the page they first appeared on.
    Cohort(CohortArgs),
    /// Quality, position-bias, correlation and scatter tables with figures.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub mode: Option<SimKind>,
    /// Ranking rule of an aggregator run.
    #[arg(long, value_enum)]
    pub rule: Option<Rule>,
    #[arg(long)]
    pub articles: Option<usize>,
    #[arg(long)]
    pub ticks: Option<usize>,
    #[arg(long)]
    pub users_per_tick: Option<usize>,
    /// Total MusicLab worlds, the randomly ordered one included.
    #[arg(long)]
    pub worlds: Option<usize>,
    #[arg(long)]
    pub initial_upvotes: Option<u64>,
    #[arg(long)]
    pub bucket_minutes: Option<u32>,
    #[arg(long)]
    pub view_decay: Option<f64>,
    /// Length of the true view curve.
    #[arg(long)]
    pub positions: Option<usize>,
    #[arg(long)]
    pub max_quality: Option<f64>,
    #[arg(long)]
    pub social_weight: Option<f64>,
    /// Per-hour log-rate decay of voting propensity (at most 0).
    #[arg(long, allow_negative_numbers = true)]
    pub age_decay: Option<f64>,
    /// Downvote probabilities are drawn uniformly from LO,HI (Reddit).
    #[arg(long, value_delimiter = ',', value_name = "LO,HI")]
    pub downvotes: Option<Vec<f64>>,
}

/// How observation files are read and filtered.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Observation file (JSONL, one snapshot per line).
    pub observations: PathBuf,
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Skip the inclusion filters; snapshots are only differenced.
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub max_age_hours: Option<f64>,
    #[arg(long)]
    pub bucket_minutes: Option<u32>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub variant: Option<ModelVariant>,
    #[arg(long)]
    pub reference_position: Option<u32>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub ridge: Option<f64>,
}

#[derive(Debug, Args)]
pub struct QualityArgs {
    /// A fit.json written by `fit`.
    pub fit: PathBuf,
    /// Observations the fit came from; needed for Reddit vote ratios.
    #[arg(long)]
    pub observations: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub no_filter: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// Variants to compare, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<ModelVariant>>,
    /// Variant of the accuracy table.
    #[arg(long)]
    pub variant: Option<ModelVariant>,
}

#[derive(Debug, Args)]
pub struct DefuzzArgs {
    /// True score u - d of the article.
    #[arg(long, allow_negative_numbers = true, requires = "ratio")]
    pub score: Option<i64>,
    /// True upvote share u / (u + d).
    #[arg(long, requires = "score")]
    pub ratio: Option<f64>,
    /// Run the synthetic regressor benchmark instead.
    #[arg(long, conflicts_with = "score")]
    pub benchmark: bool,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Neighbours of the k-NN regressor.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CohortArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub page_size: Option<u32>,
    /// Entry score articles must show on first sight; negative disables it.
    #[arg(long, allow_negative_numbers = true)]
    pub entry_score: Option<i64>,
    #[arg(long)]
    pub max_entry_age_minutes: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A fit.json written by `fit`.
    pub fit: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Name of the dataset in spearman.csv; the file stem by default.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Skip the SVG figures.
    #[arg(long)]
    pub no_figures: bool,
}
