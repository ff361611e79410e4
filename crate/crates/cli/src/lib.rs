//! The `q2d` command line: index, expand, search, evaluate, bench, train.
//!
//! Commands exchange only files. Settings resolve from flags first, then
//! the `--config` TOML file, then `Q2D_*` environment variables.

mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use q2d_core::pipeline::SearchMode;

pub use commands::{
    cmd_bench, cmd_evaluate, cmd_expand, cmd_index, cmd_search, cmd_train, open_index, LoadedIndex,
};
pub use config::Layers;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "q2d",
    version,
    about = "Query expansion by generated pseudo-documents: retrieval and evaluation"
)]
pub struct Cli {
    /// TOML file with default settings (keys match long flag names).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a sparse (BM25) or dense (vector) index from a collection.
    Index(IndexArgs),
    /// Produce a pseudo-document per query, from a file or a completion endpoint.
    Expand(ExpandArgs),
    /// Rank documents for every query and write a TREC run file.
    Search(SearchArgs),
    /// Score a run file against qrels.
    Evaluate(EvaluateArgs),
    /// Measure per-query expansion and search latency.
    Bench(BenchArgs),
    /// Train a toy linear encoder with the contrastive or distillation loss.
    Train(TrainArgs),
}

macro_rules! value_enum_from_str {
    ($($t:ty),*) => {$(
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                <$t as ValueEnum>::from_str(s, false)
            }
        }
    )*};
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndexKind {
    Sparse,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// Deterministic hashed random projection; needs no network.
    Hash,
    /// Remote embedding endpoint.
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Dot,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Cls,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Contrastive,
    Distill,
}

value_enum_from_str!(
    IndexKind,
    ProviderKind,
    MetricArg,
    PoolingArg,
    ReportFormat,
    ObjectiveArg
);

#[derive(Debug, Args, Default)]
pub struct IndexArgs {
    #[arg(long)]
    pub collection: Option<PathBuf>,
    /// Output index file.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<IndexKind>,
    /// BM25 k1 stored as the index default.
    #[arg(long)]
    pub k1: Option<f64>,
    /// BM25 b stored as the index default.
    #[arg(long)]
    pub b: Option<f64>,
    /// Replace the built-in stopword list with one word per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub no_stem: bool,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    pub pooling: Option<PoolingArg>,
    #[arg(long)]
    pub embed_endpoint: Option<String>,
    #[arg(long)]
    pub embed_model: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct ExpandArgs {
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Output expansions TSV.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Use pre-generated pseudo-documents instead of calling a model.
    #[arg(long)]
    pub offline_expansions: Option<PathBuf>,
    /// Few-shot pool, `query<TAB>passage` per line.
    #[arg(long)]
    pub examples: Option<PathBuf>,
    /// Completion endpoint URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k_examples: Option<usize>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    /// Send a chat-style request with a system message.
    #[arg(long)]
    pub chat: bool,
}

#[derive(Debug, Args, Default, Clone)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<SearchMode>,
    /// Output run file.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub offline_expansions: Option<PathBuf>,
    /// Times the query is repeated before the pseudo-document.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub fb_docs: Option<usize>,
    #[arg(long)]
    pub fb_terms: Option<usize>,
    /// Weight of the original query in RM3 interpolation.
    #[arg(long)]
    pub fb_weight: Option<f64>,
    /// Query length limit, in analyzer terms, for dense search.
    #[arg(long)]
    pub max_query_terms: Option<usize>,
    #[arg(long)]
    pub embed_endpoint: Option<String>,
    /// Tag written in the last run-file column (default: the mode name).
    #[arg(long)]
    pub tag: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
    /// Minimum grade counted as relevant by MRR and recall.
    #[arg(long)]
    pub rel_threshold: Option<u32>,
    /// Comma-separated measures, e.g. `MRR@10,R@50,R@1000,nDCG@10`.
    #[arg(long)]
    pub metrics: Option<String>,
    /// Also write the report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct BenchArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    /// Synthetic task as JSON; omitted fields take their defaults.
    #[arg(long)]
    pub task: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    let layers = Layers::load(cli.config.as_deref())?;
    match cli.command {
        Command::Index(a) => cmd_index(&a, &layers),
        Command::Expand(a) => cmd_expand(&a, &layers),
        Command::Search(a) => cmd_search(&a, &layers).map(|_| ()),
        Command::Evaluate(a) => {
            let out = cmd_evaluate(&a, &layers)?;
            print!("{out}");
            Ok(())
        }
        Command::Bench(a) => {
            let out = cmd_bench(&a, &layers)?;
            println!("{out}");
            Ok(())
        }
        Command::Train(a) => {
            let out = cmd_train(&a, &layers)?;
            println!("{out}");
            Ok(())
        }
    }
}
