use std::path::PathBuf;
use std::process::ExitCode;

use amarec::config::keys_help;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

mod commands;

/// Attentive multi-modal autoencoder recommender.
#[derive(Debug, Parser)]
#[command(name = "amarec", version)]
struct Cli {
    /// Worker threads for parallel work (default: one per core). Results do
    /// not depend on this value.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Start from a bundled preset, e.g. ml1m-ama.
    #[arg(long)]
    pub preset: Option<String>,

    /// Config file with `key = value` lines, applied after the preset.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one key, applied last. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DataDir {
    /// Prepared dataset directory.
    #[arg(long, env = "AMAREC_DATA_DIR", value_name = "DIR")]
    pub data_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Trained model file (default: DATA_DIR/model.bin).
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Item embeddings the model was trained with (default: DATA_DIR/embeddings.bin).
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse raw ratings, binarize and write temporal train/validation/test splits.
    Prep(PrepArgs),
    /// Compute SVD item embeddings from the train split.
    Embed(EmbedArgs),
    /// Train an AMA model.
    Train(TrainArgs),
    /// Rank and score a model or baseline on validation or test.
    Evaluate(EvaluateArgs),
    /// Attention and mode reports for a trained model.
    Explain(ExplainArgs),
    /// Print the resolved configuration.
    Config(ShowConfigArgs),
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    /// Raw rating file (MovieLens ratings.dat or an Amazon ratings CSV).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[command(flatten)]
    pub data: DataDir,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub data: DataDir,
    /// Output file (default: DATA_DIR/embeddings.bin).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataDir,
    /// Item embeddings; computed and written here when absent or stale
    /// (default: DATA_DIR/embeddings.bin).
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Output model file (default: DATA_DIR/model.bin).
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataDir,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Evaluate a baseline instead of a model: pop or puresvd.
    #[arg(long, conflicts_with = "model")]
    pub baseline: Option<String>,
    /// validation or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Comma-separated cutoffs, overriding the `ks` key.
    #[arg(long, value_name = "K,K,..")]
    pub ks: Option<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also print a text table to stderr.
    #[arg(long)]
    pub table: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("report").required(true).args(["user", "modes", "histogram"])))]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataDir,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Explain one user's recommendations (external user id).
    #[arg(long, value_name = "ID")]
    pub user: Option<String>,
    /// Top attended items per mode, aggregated over all train histories.
    #[arg(long)]
    pub modes: bool,
    /// How many distinct modes each user's top-K list draws from.
    #[arg(long)]
    pub histogram: bool,
    /// Recommendation list length.
    #[arg(short = 'k', long, default_value_t = 10)]
    pub k: usize,
    /// Items listed per mode with --modes.
    #[arg(short = 'n', long, default_value_t = 10)]
    pub top_n: usize,
    /// Split whose history is used and whose items count as hits.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// With --user, also write a Graphviz graph.
    #[arg(long, value_name = "FILE")]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ShowConfigArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn parse_cli() -> Cli {
    let help = keys_help();
    let mut cmd = Cli::command().after_long_help(help.clone());
    for name in ["prep", "embed", "train", "evaluate", "config"] {
        cmd = cmd.mut_subcommand(name, |sub| sub.after_help(help.clone()));
    }
    let matches = cmd.get_matches();
    Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())
}

fn main() -> ExitCode {
    let cli = parse_cli();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Prep(a) => commands::prep(a),
        Command::Embed(a) => commands::embed(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Explain(a) => commands::explain(a),
        Command::Config(a) => commands::show_config(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
