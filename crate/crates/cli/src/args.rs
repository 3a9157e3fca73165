use std::ops::Range;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gridbench", version, about = "Grid-world reasoning benchmark: datasets, expert and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset for one task.
    Generate(GenerateArgs),
    /// Run the expert on one instance and print how its subgoal stack evolves.
    Solve(SolveArgs),
    /// Evaluate a model on a dataset and write report files.
    Eval(EvalArgs),
    /// List the benchmark levels and Plan environment sizes.
    Levels,
    /// Combine report.json files into one summary table.
    Summary(SummaryArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Predict,
    Plan,
    Decompose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    Narrative,
    Structured,
    Json,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Comma-separated level names (`GoTo` or `BabyAI-GoTo-v0`), or `all`.
    /// Ignored for the plan task.
    #[arg(long, default_value = "all")]
    pub levels: String,
    /// Inclusive seed range `a..b`, or a single seed.
    #[arg(long, value_parser = parse_seeds, default_value = "0..99")]
    pub seeds: Range<u64>,
    /// Plan task: grid size (small, medium, large, ultra).
    #[arg(long, default_value = "small")]
    pub size: String,
    /// Plan task: number of distractor objects.
    #[arg(long, default_value_t = 0)]
    pub dists: usize,
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
    /// Predict prefix policy: `mixed`, `full` or a fixed number of actions.
    #[arg(long, default_value = "mixed")]
    pub prefix: String,
    /// Probability of the whole trace under the mixed policy.
    #[arg(long, default_value_t = 0.2)]
    pub full_prob: f64,
    #[arg(long, value_enum, default_value = "structured")]
    pub style: StyleArg,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Level name, or a Plan environment name.
    pub level: String,
    pub seed: u64,
    /// Start from this stack instead of the translated mission. Subgoal lines
    /// in execution order, separated by newlines or `;`, for example
    /// `(GoNextToSubgoal, (3, 4)); (OpenSubgoal)`. Use `@file` to read a file.
    #[arg(long)]
    pub init_stack: Option<String>,
    /// Forbid subgoal insertions.
    #[arg(long)]
    pub no_additions: bool,
    /// Print the environment description first.
    #[arg(long)]
    pub describe: bool,
    /// Print the trace as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// A dataset file, or a directory of dataset files for one task.
    #[arg(long)]
    pub dataset: PathBuf,
    /// `oracle`, `silent`, or a path to a provider config (TOML).
    #[arg(long, default_value = "oracle")]
    pub model: String,
    #[arg(long, default_value = "zero_shot")]
    pub strategy: String,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Keep rows already completed in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Evaluate at most this many rows.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Override the config's request concurrency.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Manhattan distance charged to unparseable Predict answers; omitted
    /// from the means when unset.
    #[arg(long)]
    pub parse_failure_distance: Option<f64>,
    /// Write each prompt to `prompts.jsonl` in the output directory.
    #[arg(long)]
    pub save_prompts: bool,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    /// report.json files or directories containing one.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Also write the table as CSV to this path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// `a..b` and `a..=b` are both inclusive; `n` is a single seed.
pub fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let bad = || format!("invalid seed range `{s}` (expected a..b or a single seed)");
    let s = s.trim();
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
        None => (s, s),
    };
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if b < a {
        return Err(bad());
    }
    Ok(a..b + 1)
}
