//! `react-cmg`: ingest commit histories, build retrieval artifacts, suggest
//! commit messages for diffs and run retrieval ablations.

mod commands;
mod config;
mod git;
mod hook;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use config::EmbedderKind;

#[derive(Parser)]
#[command(name = "react-cmg", version, about = "Retrieval-augmented commit message generation")]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true, env = "REACT_CMG_CONFIG")]
    config: Option<PathBuf>,
    /// More logging on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a filtered corpus from JSONL or a local git repository.
    Ingest(IngestArgs),
    /// Build the BM25 index and embedding store for a corpus.
    Index(IndexArgs),
    /// Suggest a commit message for one diff.
    Generate(GenerateArgs),
    /// Run ablation modes over a test split and write a report directory.
    Eval(EvalArgs),
    /// Install or remove the prepare-commit-msg hook.
    HookInstall(HookArgs),
    /// Write a seeded synthetic source database and test split.
    Synth(SynthArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("input").required(true).args(["from_jsonl", "from_git"])))]
pub struct IngestArgs {
    #[arg(long, value_name = "PATH")]
    pub from_jsonl: Option<PathBuf>,
    #[arg(long, value_name = "REPO_DIR")]
    pub from_git: Option<PathBuf>,
    /// Repository slug for git input; defaults to the origin remote.
    #[arg(long, value_name = "OWNER/NAME")]
    pub repo: Option<String>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub min_message_tokens: Option<usize>,
    #[arg(long)]
    pub exclude_bots: bool,
    /// Output corpus; defaults to `paths.corpus` from the config.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct IndexArgs {
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderKind>,
    /// Artifact base path; writes `<out>.idx` and `<out>.emb`.
    #[arg(long, value_name = "BASE")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorKind {
    Chat,
    MockEcho,
}

#[derive(Args)]
pub struct SourceArgs {
    /// Source database corpus.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Artifact base path; defaults to the corpus path without extension.
    #[arg(long, value_name = "BASE")]
    pub index: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GeneratorKind::Chat)]
    pub generator: GeneratorKind,
    /// Chat endpoint base URL.
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Directory with `<kind>.system.txt` / `<kind>.user.txt` overrides.
    #[arg(long, value_name = "DIR")]
    pub templates: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Query diff file; `-` reads stdin.
    #[arg(long, value_name = "PATH", conflicts_with = "from_staged")]
    pub diff_file: Option<PathBuf>,
    /// Use the staged changes of the repository in `--repo-dir`.
    #[arg(long)]
    pub from_staged: bool,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub repo_dir: PathBuf,
    /// no-retrieval, random[:SEED], bm25, dense or hybrid.
    #[arg(long, default_value = "hybrid")]
    pub mode: String,
    /// Only retrieve exemplars from this repository.
    #[arg(long, value_name = "OWNER/NAME")]
    pub project_only: Option<String>,
    /// Print the retrieved pair to stderr.
    #[arg(long)]
    pub show_exemplar: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_name = "PATH")]
    pub test: PathBuf,
    /// Comma-separated or repeated; defaults to hybrid.
    #[arg(long = "modes", alias = "mode", value_delimiter = ',', action = clap::ArgAction::Append)]
    pub modes: Vec<String>,
    /// Restrict each query's retrieval to its own repository.
    #[arg(long)]
    pub within_project: bool,
    /// Report directory; defaults to `paths.reports`, then `reports`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Unix time recorded in run manifests; defaults to SOURCE_DATE_EPOCH,
    /// then the current time.
    #[arg(long)]
    pub timestamp: Option<i64>,
}

#[derive(Args)]
pub struct HookArgs {
    #[arg(long)]
    pub uninstall: bool,
    /// Replace or remove a hook not installed by react-cmg.
    #[arg(long)]
    pub force: bool,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub repo_dir: PathBuf,
    /// Slug passed to `--project-only`; defaults to the origin remote.
    #[arg(long, value_name = "OWNER/NAME")]
    pub project: Option<String>,
    /// Source database the hook queries.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_name = "BASE")]
    pub index: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorKind>,
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n_source: usize,
    #[arg(long, default_value_t = 50)]
    pub n_test: usize,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
    NoCandidates(String),
    Generation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Runtime(_) => 1,
            Self::Usage(_) => 2,
            Self::NoCandidates(_) => 3,
            Self::Generation(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "{m}"),
            Self::Runtime(e) => write!(f, "{e:#}"),
            Self::NoCandidates(m) => write!(f, "no exemplar available: {m}"),
            Self::Generation(m) => write!(f, "generation failed: {m}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Self::Runtime(e.into())
            }
        }
    )*};
}

runtime_from!(
    react_cmg_core::corpus::CorpusError,
    react_cmg_core::augment::AugmentError,
    react_cmg_core::harness::HarnessError,
    react_cmg_core::retriever::RetrieveError,
    react_cmg_core::embed::EmbedError
);

fn init_tracing(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default.into());
    use std::io::IsTerminal;
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_tracing(cli.verbose);
    let cfg = match config::AppConfig::load(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&cfg, a),
        Command::Index(a) => commands::index(&cfg, a),
        Command::Generate(a) => commands::generate(&cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::HookInstall(a) => commands::hook_install(cli.config.as_deref(), a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
