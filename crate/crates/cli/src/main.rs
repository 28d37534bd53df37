mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "asmsieve", version, about = "Clone search for binary functions over interpretable feature documents")]
pub struct Cli {
    /// TOML settings file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output format for reports printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClientKind {
    /// HTTP chat-completions endpoint (`ASMSIEVE_LLM_URL`, `ASMSIEVE_LLM_KEY`).
    Live,
    /// Recorded fixtures only; a miss is an error.
    Replay,
    /// Deterministic static analyzer, partial documents, no prompting.
    Static,
    /// Heuristic analyzer answering full prompts through the retry loop.
    Heuristic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse listings into a corpus file.
    Ingest(IngestArgs),
    /// Build ground-truth pairs from two corpora.
    Pairs(PairsArgs),
    /// Draw a seeded evaluation pool from a pairs file.
    Pool(PoolArgs),
    /// Extract feature documents for every function of a corpus.
    Extract(ExtractArgs),
    /// Build an index snapshot from a features file.
    Index(IndexArgs),
    /// Query an index snapshot.
    Search(SearchArgs),
    /// Field-level difference between two documents.
    Diff(DiffArgs),
    /// Jaccard pre-filter, then hybrid re-rank with embeddings.
    Rerank(RerankArgs),
    /// MRR and Recall@1 over a pool.
    Eval(EvalArgs),
    /// Evaluate pools across one axis of prompt configurations.
    Ablate(AblateArgs),
    /// Fixture store maintenance.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Listing files in the `; FUNCTION <name>` format.
    #[arg(required = true)]
    pub listings: Vec<PathBuf>,
    #[arg(long)]
    pub library: String,
    #[arg(long)]
    pub arch: String,
    #[arg(long = "opt")]
    pub opt_level: String,
    /// Drop functions with fewer instructions.
    #[arg(long, default_value_t = asmsieve::corpus::DEFAULT_MIN_INSTRUCTIONS)]
    pub min_instr: usize,
    /// Truncate longer functions.
    #[arg(long, default_value_t = asmsieve::corpus::DEFAULT_MAX_INSTRUCTIONS)]
    pub max_instr: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    #[arg(long, default_value = "cross_optimization")]
    pub pairing: String,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    pub pairs: PathBuf,
    #[arg(long)]
    pub size: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct PromptArgs {
    /// Few-shot examples per prompt (0-4).
    #[arg(long = "examples")]
    pub num_examples: Option<usize>,
    /// Comma-separated prompt sections to enable.
    #[arg(long, value_delimiter = ',')]
    pub sections: Option<Vec<String>>,
    #[arg(long)]
    pub no_system_prompt: bool,
    #[arg(long)]
    pub schema_in_prompt: bool,
    /// Directory of `<name>.asm` / `<name>.json` example pairs.
    #[arg(long)]
    pub examples_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub base_temperature: Option<f64>,
    #[arg(long)]
    pub temperature_step: Option<f64>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct FlattenArgs {
    /// Log-bucket count fields.
    #[arg(long)]
    pub bucket_counts: bool,
    /// One token per array instead of per element.
    #[arg(long)]
    pub atomic_arrays: bool,
    /// Field names to leave out of token sets (repeatable).
    #[arg(long = "exclude")]
    pub excluded_fields: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = ClientKind::Replay)]
    pub client: ClientKind,
    /// Fixture directory read by `--client replay`.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Record every response of a live or heuristic client into this directory.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Maximum extractions in flight.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Write per-function transcripts as JSON lines.
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    #[command(flatten)]
    pub prompt: PromptArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    pub features: PathBuf,
    #[command(flatten)]
    pub flatten: FlattenArgs,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    pub snapshot: PathBuf,
    /// Features file holding the query documents.
    #[arg(long)]
    pub query: PathBuf,
    /// Query only these ids (repeatable); default every document in the file.
    #[arg(long = "id")]
    pub ids: Vec<String>,
    #[arg(short)]
    pub k: Option<usize>,
    /// Answer queries on all cores.
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub flatten: FlattenArgs,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    pub features: PathBuf,
    pub left: String,
    pub right: String,
    /// Features file for the right id, when it differs.
    #[arg(long)]
    pub right_features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    pub snapshot: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long = "id")]
    pub ids: Vec<String>,
    /// Embedding vectors (`{id, values}` lines) for queries and documents.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[command(flatten)]
    pub flatten: FlattenArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub pool: PathBuf,
    pub features: PathBuf,
    #[arg(long, default_value = "jaccard")]
    pub scorer: String,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub flatten: FlattenArgs,
    /// Write the JSON report here as well as printing it.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Corpus holding every function referenced by the pools.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Pool files (repeatable).
    #[arg(long = "pool", required = true)]
    pub pools: Vec<PathBuf>,
    /// num_examples, drop_one_section, system_prompt or schema_in_prompt.
    #[arg(long)]
    pub axis: String,
    #[arg(long, value_enum, default_value_t = ClientKind::Replay)]
    pub client: ClientKind,
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(long, default_value = "jaccard")]
    pub scorer: String,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub prompt: PromptArgs,
    #[command(flatten)]
    pub flatten: FlattenArgs,
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Store externally produced responses under the prompts this build renders.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSON lines `{"id": ..., "responses": ["raw text", ...]}`, one response per attempt.
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub fixtures: PathBuf,
    #[command(flatten)]
    pub prompt: PromptArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
