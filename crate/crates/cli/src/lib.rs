//! The `tweettopic` command line.
//!
//! Every subcommand reads and writes only the paths it is given. Exit status
//! is 0 on success, 1 for usage and input errors, 2 for internal failures.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "tweettopic", version, about = "Topic classification for Nepali COVID-19 tweets")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Keyword/language filter and deduplication of raw JSONL tweets.
    Ingest(IngestArgs),
    /// Clean raw tweets and report what each step changed.
    Preprocess(PreprocessArgs),
    /// Train a model snapshot on a labeled dataset.
    Train(TrainArgs),
    /// Score a snapshot on a dataset, or run k-fold cross-validation.
    Evaluate(EvaluateArgs),
    /// Per-topic Fleiss' kappa over an annotation export.
    Kappa(KappaArgs),
    /// Cross-validated macro AUPR at several training-set sizes.
    Ablate(AblateArgs),
    /// Per-topic tweet counts by day or week from a store.
    Trends(TrendsArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Write the whole store as a dataset CSV with a status column.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub keywords: PathBuf,
    /// Filtered, deduplicated tweets as JSONL.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = tweettopic::ingest::DEFAULT_LANG)]
    pub lang: String,
    /// Only keep tweets created at or after this time.
    #[arg(long)]
    pub since: Option<String>,
    /// Also clean the kept tweets and add them to this store.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Label newly stored tweets with this snapshot (requires --store).
    #[arg(long, requires = "store")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step change and drop counts as CSV.
    #[arg(long)]
    pub report: PathBuf,
    /// Also write the labeled survivors as a dataset CSV.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Training and feature settings (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Precomputed embeddings (`id,dim` CSV or JSONL) instead of hashed n-grams.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Overrides the training seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step learning rate and loss as CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Snapshot to score; omit and pass --folds for cross-validation.
    #[arg(long, conflicts_with = "folds", required_unless_present = "folds")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Metrics CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Human-readable table; printed to stdout when omitted.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Fold assignments, one `id,fold` row per tweet (cross-validation only).
    #[arg(long, requires = "folds")]
    pub plan: Option<PathBuf>,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated subset sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = tweettopic::metrics::DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct TrendsArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value = "day")]
    pub granularity: String,
    /// Restrict to one topic; all eight otherwise.
    #[arg(long)]
    pub topic: Option<String>,
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Why a subcommand failed; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    User(String),
    Internal(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::User(_) => 1,
            Failure::Internal(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::User(m) => write!(f, "error: {m}"),
            Failure::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<tweettopic::Error> for Failure {
    fn from(e: tweettopic::Error) -> Self {
        use tweettopic::Error as E;
        match e {
            E::NonFinite(_) | E::TrainingAborted(_) => Failure::Internal(e.to_string()),
            _ => Failure::User(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    match std::panic::catch_unwind(|| commands::dispatch(cli.command)) {
        Ok(Ok(())) => 0,
        Ok(Err(f)) => {
            eprintln!("{f}");
            f.exit_code()
        }
        Err(_) => 2,
    }
}
