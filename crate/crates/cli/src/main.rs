//! `menorm`: stage-by-stage medical entity normalization from the command line.
//!
//! Every stage reads and writes files and records a `<artifact>.manifest.json`
//! sidecar (index directories carry `manifest.json`). Failures print one line
//! `error<TAB><code><TAB><message>` to stderr and exit nonzero.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "menorm", version, about = "Cross-lingual medical entity normalization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a target knowledge base from a YAML config.
    Dict(DictArgs),
    /// Build a TF-IDF or dense index over a knowledge base.
    Index(IndexArgs),
    /// Generate candidates for every mention; several indices are merged.
    Link(LinkArgs),
    /// Drop candidates whose semantic groups do not fit the mention type.
    Filter(FilterArgs),
    /// Train the built-in re-ranker.
    TrainReranker(TrainArgs),
    /// Re-rank candidate lists with a trained model.
    Rerank(RerankArgs),
    /// Strict span-level evaluation; JSON report on stdout.
    Evaluate(EvalArgs),
    /// Project annotations through a marker-preserving translator.
    Project(ProjectArgs),
}

#[derive(Debug, Args)]
struct DictArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IndexKind {
    Tfidf,
    Dense,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long, value_enum)]
    kind: IndexKind,
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Embedding provider for dense indices: `hash[:dim]`, `precomputed:<path>`, `remote[:dim]`.
    #[arg(long, default_value = "hash")]
    provider: String,
}

#[derive(Debug, Args)]
struct LinkArgs {
    /// Index directory; repeat to merge several generators.
    #[arg(long = "index", required = true)]
    indices: Vec<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    /// Query-side provider for dense indices; must match the index's provider.
    #[arg(long, default_value = "hash")]
    provider: String,
    /// Refuse indices not built from this KB.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Query with Schwartz-Hearst long forms where mentions are abbreviations.
    #[arg(long)]
    expand_abbreviations: bool,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `type<TAB>group,...` lines; default maps each group code onto itself.
    #[arg(long)]
    type_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// YAML re-ranker config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    train_split: String,
    /// Model-selection split; defaults to `validation` when present, else the training split.
    #[arg(long)]
    val_split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    type_map: Option<PathBuf>,
    /// Training report (per-epoch loss, regularizer, validation F1) as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Serialized mention/concept encodings of the training batches, as JSONL.
    #[arg(long)]
    export_batches: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RerankArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Only re-rank mentions of this split.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    type_map: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    /// Candidate dump (JSONL) or a dataset whose normalizations are the predictions.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,64")]
    k: Vec<usize>,
    /// Restrict the gold standard (and predictions) to one split.
    #[arg(long)]
    split: Option<String>,
    /// Enables the shared-alias breakdown.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TranslatorKind {
    /// Endpoint from `MENORM_TRANSLATE_ENDPOINT`.
    Remote,
    /// Returns its input; useful to check a corpus round-trips.
    Identity,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "remote")]
    translator: TranslatorKind,
    /// Keep documents whose first marker pass failed but a later pass recovered.
    #[arg(long)]
    salvage_partial: bool,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    /// Also write the loss report here (it always goes to stdout).
    #[arg(long)]
    report: Option<PathBuf>,
}

fn error_line(code: &str, message: &str) -> String {
    let flat: Vec<&str> = message.split_whitespace().collect();
    format!("error\t{code}\t{}", flat.join(" "))
}

fn run(argv: impl IntoIterator<Item = OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<menorm::Error>().map_or("error", |e| e.code());
            eprintln!("{}", error_line(code, &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    run(std::env::args_os())
}
