//! `ragforge`: one entry point for every pipeline stage.
//!
//! Exit status is 0 on success, 1 when a command fails, 2 on bad usage.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use ragforge_core::corpus::{CorpusVariant, ValidationPolicy};
use ragforge_core::engine::PromptProfile;

#[derive(Debug, Parser)]
#[command(name = "ragforge", version, about = "Retrieval-augmented university chatbot toolkit")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render course and info records into a document corpus.
    BuildCorpus(BuildCorpusArgs),
    /// Chunk and embed a corpus into a vector index.
    BuildIndex(BuildIndexArgs),
    /// Interactive chat over an index, reading questions from stdin.
    Chat(ChatArgs),
    /// Run the HTTP chat service.
    Serve(ServeArgs),
    /// Compare providers on golden question/answer pairs.
    Eval(EvalArgs),
    /// Write fine-tuning pairs in the export format.
    ExportFinetune(ExportArgs),
    /// Usage statistics from a service event log.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Clear,
    Full,
    Emb,
}

impl From<VariantArg> for CorpusVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Clear => CorpusVariant::Clear,
            VariantArg::Full => CorpusVariant::Full,
            VariantArg::Emb => CorpusVariant::Emb,
        }
    }
}

#[derive(Debug, Args)]
struct BuildCorpusArgs {
    /// Course records, one JSON object per line.
    #[arg(long)]
    courses: PathBuf,
    /// Info documents, one JSON object per line.
    #[arg(long)]
    info: PathBuf,
    #[arg(long, value_enum)]
    variant: VariantArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbedderArg {
    Local,
    Remote,
}

impl EmbedderArg {
    fn spec(self) -> &'static str {
        match self {
            EmbedderArg::Local => "local",
            EmbedderArg::Remote => "remote",
        }
    }
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Index file; `.chunks.jsonl` and `.meta.json` sidecars are written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Vector dimension (local embedder default 256).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_enum, default_value = "local")]
    provider: EmbedderArg,
    #[arg(long, default_value_t = 1000)]
    chunk_size: usize,
    #[arg(long, default_value_t = 50)]
    chunk_overlap: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Custom,
    Condensed,
}

impl From<ProfileArg> for PromptProfile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Custom => PromptProfile::CustomOnly,
            ProfileArg::Condensed => PromptProfile::Condensed,
        }
    }
}

#[derive(Debug, Args)]
struct ChatArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, value_enum, default_value = "condensed")]
    profile: ProfileArg,
    /// extractive, script:PATH or remote:MODEL
    #[arg(long, default_value = "extractive")]
    llm: String,
    /// Use the revised answering prompt.
    #[arg(long)]
    sharper: bool,
    #[arg(long, default_value_t = ragforge_core::engine::DEFAULT_K)]
    k: usize,
    #[arg(long)]
    max_new_tokens: Option<u32>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum JudgeArg {
    /// Offline rule-based judge.
    Scripted,
    /// Chat model behind RAGFORGE_LLM_URL.
    Remote,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["index", "corpus"])))]
struct EvalArgs {
    /// Golden pairs (JSONL); the bundled set is used when omitted.
    #[arg(long)]
    golden: Option<PathBuf>,
    /// Comma-separated provider specs: extractive, script:PATH, remote:MODEL.
    #[arg(long, value_delimiter = ',', required = true)]
    providers: Vec<String>,
    #[arg(long, value_enum, default_value = "scripted")]
    judge: JudgeArg,
    /// Model name for the remote judge.
    #[arg(long, default_value = "gpt-3.5-turbo")]
    judge_model: String,
    #[arg(long, default_value_t = ragforge_core::eval::DEFAULT_MAX_NEW_TOKENS)]
    max_new_tokens: u32,
    #[arg(long)]
    out: PathBuf,
    /// Saved index to retrieve from.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Corpus to chunk and index in memory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = ragforge_core::engine::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long)]
    sharper: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Holdout,
    Sample,
}

impl From<PolicyArg> for ValidationPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Holdout => ValidationPolicy::Holdout,
            PolicyArg::Sample => ValidationPolicy::Sample,
        }
    }
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Fine-tuning examples (JSONL).
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the validation split here.
    #[arg(long)]
    valid_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0, requires = "valid_out")]
    seed: u64,
    #[arg(long, value_enum, default_value = "holdout", requires = "valid_out")]
    policy: PolicyArg,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Event log file, or the service data directory holding it.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
