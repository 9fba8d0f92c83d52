use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "orchestrator", version, about = "Agent routing, planning and execution for e-commerce copilots")]
pub struct Cli {
    /// Config file (TOML, or JSON by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for data generation and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic (or CSV-derived) train/test prompt files.
    GenerateData(GenerateArgs),
    /// Train the router head and save it with its registry.
    TrainRouter(TrainRouterArgs),
    /// Evaluate the router on a prompt file.
    EvalRouter(EvalRouterArgs),
    /// Route one prompt and print the decision.
    Route { text: String },
    /// Train the planner tree from executed plan traces.
    TrainPlanner(PromptFile),
    /// Evaluate the planner on a prompt file.
    EvalPlanner(PromptFile),
    /// Interactive chat over stdin.
    Chat(RunArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Parameter counts for a base and its adapter arms.
    ReportMemory(MemoryArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub prompts_per_class: usize,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Classes kept out of training, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub withhold: Vec<String>,
    /// Ingest a `text,l1,l2,l3` CSV instead of generating prompts.
    #[arg(long)]
    pub from_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainRouterArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Registry to train against; the built-in e-commerce agents otherwise.
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalRouterArgs {
    #[arg(long)]
    pub test: PathBuf,
    /// Only score prompts whose gold leaf is one of these agents.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PromptFile {
    #[arg(long = "data")]
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Train a copilot in-process instead of loading artifacts.
    #[arg(long)]
    pub demo: bool,
    /// Conversation locale.
    #[arg(long, default_value = "en-US")]
    pub locale: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub demo: bool,
    /// Overrides the configured bind address.
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct MemoryArgs {
    /// Layer widths of a random base, e.g. `4,4`.
    #[arg(long, value_delimiter = ',', default_value = "4,4")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub arms: usize,
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    /// Base checkpoint; overrides `--dims`.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Arm checkpoints; override `--arms` and `--rank`.
    #[arg(long = "arm")]
    pub arm_files: Vec<PathBuf>,
}
