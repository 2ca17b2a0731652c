use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use packorder_core::Method;

use crate::error::EXIT_CODES;

#[derive(Debug, Parser)]
#[command(
    name = "pack-order",
    version,
    about = "Human-preference packing order: build the model, score and plan sequences, evaluate LLM pipelines",
    after_help = EXIT_CODES,
    propagate_version = true
)]
pub struct Cli {
    /// TOML file with defaults for seed, jobs, provider, policy, planner and paths
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log progress to stderr; repeat for more detail
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Suppress all log output except errors
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the pairwise preference matrix from a survey file
    #[command(after_help = EXIT_CODES)]
    BuildModel(BuildModelArgs),
    /// Score a bottom-first packing sequence against a preference matrix
    #[command(after_help = EXIT_CODES)]
    Score(ScoreArgs),
    /// Plan a packing order for a set of items
    #[command(after_help = EXIT_CODES)]
    Plan(PlanArgs),
    /// Run the perception and planning pipeline over a scene set and report metrics
    #[command(after_help = EXIT_CODES)]
    Evaluate(EvaluateArgs),
    /// Rebuild an evaluation report from its stored transcripts and compare
    #[command(after_help = EXIT_CODES)]
    Replay(ReplayArgs),
    /// Compare planners against the random baseline per scene size
    #[command(after_help = EXIT_CODES)]
    Bench(BenchArgs),
    /// Print request fingerprints, for writing mock fixtures
    #[command(after_help = EXIT_CODES)]
    Fingerprint(FingerprintArgs),
}

#[derive(Debug, Args)]
pub struct BuildModelArgs {
    /// Survey file (JSON) with declared direction and annotated sequences
    #[arg(long, value_name = "FILE")]
    pub survey: PathBuf,

    /// Additive smoothing for observed pairs [default: 0, or `alpha` from the config]
    #[arg(long, value_name = "ALPHA")]
    pub alpha: Option<f64>,

    /// Where to write the matrix file (JSON)
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Preference matrix file (JSON)
    #[arg(long, value_name = "FILE")]
    pub matrix: PathBuf,

    /// Comma-separated items, lowest first
    #[arg(long, value_name = "ITEMS", conflicts_with = "sequence_file", required_unless_present = "sequence_file")]
    pub sequence: Option<String>,

    /// File with items separated by commas or newlines, lowest first
    #[arg(long, value_name = "FILE")]
    pub sequence_file: Option<PathBuf>,

    /// The sequence lists the topmost item first
    #[arg(long)]
    pub top_first: bool,

    /// Alias file (JSON map of label to class)
    #[arg(long, value_name = "FILE")]
    pub aliases: Option<PathBuf>,

    /// Print a JSON object instead of text
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderChoice {
    Mock,
    Live,
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    /// Chat provider [default: mock, or `provider.kind` from the config]
    #[arg(long, value_enum, value_name = "KIND")]
    pub provider: Option<ProviderChoice>,

    /// Fixture file (JSON) replayed by the mock provider
    #[arg(long, value_name = "FILE")]
    pub fixtures: Option<PathBuf>,

    /// Chat completions URL for the live provider
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,

    /// Model name sent to the live provider
    #[arg(long, value_name = "NAME")]
    pub model: Option<String>,

    /// Sampling temperature sent to the live provider
    #[arg(long, value_name = "T")]
    pub temperature: Option<f64>,

    /// Per-request timeout in seconds
    #[arg(long, value_name = "SECS")]
    pub timeout: Option<f64>,

    /// Maximum concurrent requests to the live provider
    #[arg(long, value_name = "N")]
    pub max_in_flight: Option<usize>,

    /// Confirm that paid live API calls are intended (required with --provider live)
    #[arg(long)]
    pub live: bool,

    /// Prompt template file (JSON) replacing the built-in prompts
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,

    /// Planning responses must match strictly more than this share of detected items
    #[arg(long, value_name = "RATIO")]
    pub match_threshold: Option<f64>,

    /// Planning calls allowed per scene
    #[arg(long, value_name = "N")]
    pub max_attempts: Option<u32>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Preference matrix file (JSON)
    #[arg(long, value_name = "FILE")]
    pub matrix: PathBuf,

    /// Comma-separated items to pack, in any order
    #[arg(long, value_name = "ITEMS")]
    pub items: String,

    /// Planner: exact, greedy, local-search, random or llm
    #[arg(long, value_name = "METHOD", default_value = "exact", value_parser = parse_method)]
    pub method: Method,

    /// Seed for random and local-search [default: 0, or `seed` from the config]
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Local-search starts, the greedy start included
    #[arg(long, value_name = "N")]
    pub restarts: Option<usize>,

    /// Largest item count accepted by the exact planner
    #[arg(long, value_name = "N")]
    pub exact_max_items: Option<usize>,

    /// Alias file (JSON map of label to class)
    #[arg(long, value_name = "FILE")]
    pub aliases: Option<PathBuf>,

    /// Print a JSON object instead of text
    #[arg(long)]
    pub json: bool,

    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Scene set file (JSON)
    #[arg(long, value_name = "FILE")]
    pub scenes: PathBuf,

    /// Preference matrix file (JSON)
    #[arg(long, value_name = "FILE")]
    pub matrix: PathBuf,

    #[command(flatten)]
    pub provider: ProviderArgs,

    /// Reference lexicon (one label per line) for outlier rejection
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,

    /// Alias file (JSON map of label to class)
    #[arg(long, value_name = "FILE")]
    pub aliases: Option<PathBuf>,

    /// Reject scenes whose ground truth uses labels outside the catalog
    #[arg(long)]
    pub enforce_catalog: bool,

    /// Scenes evaluated concurrently [default: processors, capped by the provider limit]
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,

    /// Seed echoed into the report provenance [default: 0]
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Where to write the full report (JSON)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Where to write the per-scene-size series (CSV)
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Report written by `evaluate --out`
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,

    /// Scene set file the report was produced from
    #[arg(long, value_name = "FILE")]
    pub scenes: PathBuf,

    /// Preference matrix file the report was produced from
    #[arg(long, value_name = "FILE")]
    pub matrix: PathBuf,

    /// Reference lexicon used for the original run
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,

    /// Alias file used for the original run
    #[arg(long, value_name = "FILE")]
    pub aliases: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scene set file (JSON); each scene's ground truth is the item set
    #[arg(long, value_name = "FILE")]
    pub scenes: PathBuf,

    /// Preference matrix file (JSON)
    #[arg(long, value_name = "FILE")]
    pub matrix: PathBuf,

    /// Comma-separated planners to compare
    #[arg(long, value_name = "METHODS", value_delimiter = ',', default_value = "exact,greedy,local-search,random", value_parser = parse_method)]
    pub methods: Vec<Method>,

    /// Random orders drawn per scene for the baseline
    #[arg(long, value_name = "N", default_value_t = 50)]
    pub random_draws: u64,

    /// Base seed for random and local-search [default: 0, or `seed` from the config]
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Local-search starts, the greedy start included
    #[arg(long, value_name = "N")]
    pub restarts: Option<usize>,

    /// Largest scene the exact planner is run on; larger scenes skip it
    #[arg(long, value_name = "N")]
    pub exact_max_items: Option<usize>,

    /// Alias file (JSON map of label to class)
    #[arg(long, value_name = "FILE")]
    pub aliases: Option<PathBuf>,

    /// Where to write the full comparison (JSON)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Where to write per-size, per-method rows (CSV)
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FingerprintArgs {
    /// Print the perception fingerprint of every scene in this file
    #[arg(long, value_name = "FILE", required_unless_present = "items")]
    pub scenes: Option<PathBuf>,

    /// Print the planning fingerprint for these comma-separated detected items
    #[arg(long, value_name = "ITEMS")]
    pub items: Option<String>,

    /// Prompt template file (JSON) replacing the built-in prompts
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: packorder_core::planner::PlannerError| e.to_string())
}
