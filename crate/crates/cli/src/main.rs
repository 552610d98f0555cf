mod commands;
mod grid;
mod manifest;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use cdl::eval::CandidatePolicy;
use cdl::trainer::Variant;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cdl", version = env!("CDL_VERSION"), about = "Collaborative deep learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hold out all but P items per user as the test set.
    Split(SplitArgs),
    /// Train one model variant and write its checkpoints.
    Train(TrainArgs),
    /// Score trained models on held-out ratings.
    Eval(EvalArgs),
    /// Top-N items for a user, or scores for new items from their content.
    Predict(PredictArgs),
    /// Cross-validated grid search over config values separated by `|`.
    Grid(GridArgs),
    /// Run the Metropolis-within-Gibbs sampler.
    Sample(SampleArgs),
    /// Draw a synthetic dataset from the generative model.
    Synth(SynthArgs),
    /// Select a tf-idf vocabulary and renumber content triples.
    Vocab(VocabArgs),
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    /// Training items kept per user (1 for the sparse setting, 10 for dense).
    #[arg(long = "P", default_value_t = 1)]
    pub p: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent splits with seeds seed, seed+1, ...; more than one writes rep<r>/ subdirectories.
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub content: Option<PathBuf>,
    #[arg(long, default_value = "cdl", value_parser = parse_variant)]
    pub variant: Variant,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Model directory; repeat together with --test to aggregate repetitions.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub test: Vec<PathBuf>,
    #[arg(long = "M-grid", value_delimiter = ',', default_values_t = cdl::eval::default_m_grid())]
    pub m_grid: Vec<usize>,
    #[arg(long, default_value = "exclude-train", value_parser = parse_policy)]
    pub policy: CandidatePolicy,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub user: usize,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Rank the user's training items too.
    #[arg(long)]
    pub include_train: bool,
    /// `item<TAB>word<TAB>count` rows of new items to score from content alone.
    #[arg(long)]
    pub item_content: Option<PathBuf>,
    /// Also write predictions.tsv and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GridArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub content: Option<PathBuf>,
    #[arg(long, default_value = "cdl", value_parser = parse_variant)]
    pub variant: Variant,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Selection metric is recall@M.
    #[arg(long = "M", default_value_t = 300)]
    pub m: usize,
    /// Seed for the fold assignment; also overrides every config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concurrent training runs (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub content: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 500)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Generator precisions, `k`, `widths` and `a` (rating noise precision).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub users: usize,
    #[arg(long)]
    pub items: usize,
    #[arg(long)]
    pub vocab: usize,
    #[arg(long, default_value_t = 0.1)]
    pub density: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct VocabArgs {
    #[arg(long)]
    pub content: PathBuf,
    /// `token<TAB>word_id` lines.
    #[arg(long)]
    pub tokens: PathBuf,
    #[arg(long, default_value_t = 8000)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: cdl::CdlError| e.to_string())
}

fn parse_policy(s: &str) -> Result<CandidatePolicy, String> {
    s.parse().map_err(|e: cdl::CdlError| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CDL_LOG_LEVEL", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Grid(a) => grid::run(a),
        Command::Sample(a) => commands::sample(a),
        Command::Synth(a) => commands::synth(a),
        Command::Vocab(a) => commands::vocab(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
