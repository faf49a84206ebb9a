//! `octo` command-line entry points.

pub mod artifacts;
mod commands;
pub mod repl;
pub mod server;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use octo_core::adjectives::Property;
use octo_core::eval::Variant;
use octo_core::Split;

use artifacts::{BackendOpts, UsageError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "octo",
    version,
    about = "Tactile datasets, encoder training, retrieval, guessing and sorting"
)]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic tactile dataset directory.
    GenDataset(GenDatasetArgs),
    /// Train the tactile encoder.
    Train(TrainArgs),
    /// Compare analytic and finite-difference gradients.
    GradCheck(GradCheckArgs),
    /// Embed dataset samples into a retrieval index.
    BuildIndex(BuildIndexArgs),
    /// Retrieve the most similar indexed objects for a sample.
    Query(QueryArgs),
    /// Add a labelled sample to an index.
    Teach(TeachArgs),
    /// Guess which candidate a sample comes from.
    Guess(GuessArgs),
    /// Rank samples by hardness or roughness.
    Sort(SortArgs),
    /// Run the guessing or sorting evaluation and emit a report.
    Eval(EvalArgs),
    /// Interactive chat over stdin.
    Chat(ChatArgs),
    /// Serve the HTTP/JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2025)]
    pub seed: u64,
    #[arg(long)]
    pub objects: Option<u32>,
    /// Maximum parts per object.
    #[arg(long)]
    pub parts: Option<u32>,
    #[arg(long)]
    pub samples_per_part: Option<u32>,
    #[arg(long)]
    pub frames: Option<u32>,
    #[arg(long)]
    pub grid: Option<u32>,
    /// Probability that an object uses the dotted pad.
    #[arg(long)]
    pub pad_mix: Option<f64>,
    #[arg(long)]
    pub val_objects: Option<u32>,
    /// Objects held out entirely (the unseen pool).
    #[arg(long)]
    pub test_objects: Option<u32>,
    /// Held-out samples per part of each train object.
    #[arg(long)]
    pub holdout: Option<u32>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the per-epoch training log as JSON.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub contrastive_weight: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed: Option<usize>,
    #[arg(long)]
    pub salient_frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Splits to index.
    #[arg(long = "split", value_enum, default_values_t = [SplitArg::Train])]
    pub splits: Vec<SplitArg>,
}

#[derive(Debug, Args)]
pub struct ModelIndexArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub artifacts: ModelIndexArgs,
    #[arg(long)]
    pub sample: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}

#[derive(Debug, Args)]
pub struct TeachArgs {
    #[command(flatten)]
    pub artifacts: ModelIndexArgs,
    #[arg(long, required = true, num_args = 1..)]
    pub sample: Vec<PathBuf>,
    #[arg(long)]
    pub label: String,
    /// Where to write the updated index (default: overwrite `--index`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LlmArgs {
    #[command(flatten)]
    pub backend: BackendOpts,
    /// Dataset whose train objects form the mock model's object knowledge.
    #[arg(long)]
    pub knowledge: Option<PathBuf>,
    /// Do not augment descriptions with retrieved objects.
    #[arg(long)]
    pub no_rag: bool,
}

#[derive(Debug, Args)]
pub struct GuessArgs {
    #[command(flatten)]
    pub artifacts: ModelIndexArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[arg(long)]
    pub sample: PathBuf,
    /// Candidate labels separated by `;`.
    #[arg(long)]
    pub candidates: String,
    /// Guess again up to this many times, excluding earlier answers.
    #[arg(long, default_value_t = 1)]
    pub attempts: usize,
}

#[derive(Debug, Args)]
pub struct SortArgs {
    #[command(flatten)]
    pub artifacts: ModelIndexArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[arg(long, required = true, num_args = 2..)]
    pub samples: Vec<PathBuf>,
    #[arg(long, default_value = "hardness", value_parser = parse_property)]
    pub property: Property,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalTask {
    Guessing,
    Sorting,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub task: EvalTask,
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub artifacts: ModelIndexArgs,
    #[command(flatten)]
    pub backend: BackendOpts,
    /// Variants to run (default: all that apply to the task).
    #[arg(long = "variant", value_parser = parse_variant)]
    pub variants: Vec<Variant>,
    /// Sorting property.
    #[arg(long, default_value = "hardness", value_parser = parse_property)]
    pub property: Property,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Objects per guessing category.
    #[arg(long)]
    pub objects_per_category: Option<usize>,
    /// Sorting trials per category.
    #[arg(long)]
    pub sort_trials: Option<usize>,
    /// Minimum score gap between sorted objects.
    #[arg(long)]
    pub sort_gap: Option<f64>,
    /// Write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record every model exchange as a replay fixture.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub artifacts: ModelIndexArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
    /// Echo each input line (useful when piping a script).
    #[arg(long)]
    pub echo: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub artifacts: ModelIndexArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Also serve static files (the web console) from this directory.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

fn parse_property(s: &str) -> Result<Property, String> {
    s.parse()
        .map_err(|_| format!("unknown property `{s}` (expected hardness or roughness)"))
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
