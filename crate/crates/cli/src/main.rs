use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  internal failure
  2  argument error (unknown flag, bad or missing value)
  3  configuration error (config file, provider mismatch, missing API key)
  4  not found (missing input file, unknown post id)
  5  format error (corrupt or mismatched binary file)
  6  parse error (malformed input records)
  7  domain error (degenerate data, e.g. no usable pairs)
  8  HTTP error from the embedding service
  9  other I/O error

On failure a single JSON line {\"error\":CLASS,\"code\":N,\"message\":TEXT} is
written to stderr. Logs also go to stderr; RUST_LOG controls verbosity.";

/// Duplicate question detection with refined embeddings.
#[derive(Parser)]
#[command(name = "dupdetect", version, after_help = EXIT_CODES)]
struct Cli {
    /// JSON file of settings keyed by flag name; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker cap. Computation is single-threaded; the value bounds remote
    /// request concurrency and is echoed in outputs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean raw posts and duplicate links into a corpus file.
    Ingest(IngestArgs),
    /// Per-topic duplicate statistics as CSV.
    Census(CensusArgs),
    /// Embed every post of a corpus.
    Embed(EmbedArgs),
    /// Train a projection head on duplicate pairs.
    Train(TrainArgs),
    /// Apply a projection head to a store, producing a latent index.
    Project(ProjectArgs),
    /// Rank candidates for one post or free text (CSV on stdout).
    Rank(RankArgs),
    /// Top-N accuracy and AUC on the test split.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// JSON-lines posts: id, title, body, tags, created.
    #[arg(long)]
    posts: Option<PathBuf>,
    /// CSV with header dup_id,orig_id.
    #[arg(long)]
    links: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra regex for editor-added duplicate trailers (repeatable).
    #[arg(long)]
    trailer: Vec<String>,
}

#[derive(Args)]
struct CensusArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// remote or offline.
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model_name: Option<String>,
    /// Offline vector size (default 256).
    #[arg(long)]
    dim: Option<usize>,
    /// Offline hashing seed.
    #[arg(long)]
    hash_seed: Option<u64>,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    max_concurrency: Option<usize>,
    #[arg(long)]
    retry_limit: Option<u32>,
    #[arg(long)]
    request_batch: Option<usize>,
    /// Remote response cache; re-runs only fetch missing ids.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Training settings shared by `train` and `evaluate --compare`.
#[derive(Args, Clone)]
struct TrainingFlags {
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out_dim: Option<usize>,
    /// Model initialization and sampling seed.
    #[arg(long)]
    seed: Option<u64>,
}

/// Which pairs are held out; must match between `train` and `evaluate`.
#[derive(Args, Clone)]
struct SplitFlags {
    /// Restrict the corpus to one topic before splitting.
    #[arg(long)]
    tag: Option<String>,
    /// Fraction of pairs used for training (default 0.8).
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// triplet or mnr.
    #[arg(long)]
    loss: Option<String>,
    #[command(flatten)]
    training: TrainingFlags,
    #[command(flatten)]
    split: SplitFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    query_id: Option<u64>,
    /// Free-text query instead of --query-id; needs --model.
    #[arg(long)]
    text: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Remote endpoint, for text queries against a remote-built index.
    #[arg(long)]
    base_url: Option<String>,
    #[arg(short, long)]
    k: Option<usize>,
    /// Comma-separated tags; candidates must carry one. Needs --corpus.
    #[arg(long, value_delimiter = ',')]
    tag_filter: Option<Vec<String>>,
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    split: SplitFlags,
    /// Settings to train and compare on --store, e.g. raw,triplet,mnr.
    #[arg(long, value_delimiter = ',')]
    compare: Option<Vec<String>>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[command(flatten)]
    training: TrainingFlags,
    /// Cutoffs for Top-N accuracy (default 1,3,5,10,30).
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    neg_ratio: Option<usize>,
    /// Seed for AUC negative sampling.
    #[arg(long)]
    eval_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the Top-N table as CSV (rows N, columns settings).
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            return commands::report_failure("argument", 2, &first);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = commands::classify(&e);
            commands::report_failure(class, code, &commands::describe(&e))
        }
    }
}
