mod commands;
mod failure;
mod gradcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "redr", version, about = "Conversational question generation")]
struct Cli {
    /// TOML config; unset keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximum-likelihood training on a CoQA-format corpus.
    Train(TrainArgs),
    /// REINFORCE fine-tuning of a trained checkpoint.
    FinetuneRl(FinetuneArgs),
    /// Multi-turn conversations over SQuAD or CoQA passages.
    Generate(GenerateArgs),
    /// Corpus metrics of hypothesis questions against references.
    Evaluate(EvaluateArgs),
    /// Question-type and coreference profile of a question file.
    Analyze(AnalyzeArgs),
    /// Finite-difference check of the full loss on toy dimensions.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// CoQA-format training corpus.
    #[arg(long, value_name = "PATH")]
    train: Option<PathBuf>,
    /// CoQA-format dev corpus used to keep the best epoch.
    #[arg(long, value_name = "PATH")]
    dev: Option<PathBuf>,
    /// Checkpoint written after training.
    #[arg(long, value_name = "PATH", default_value = "redr.ckpt")]
    out: PathBuf,
    /// Line-delimited JSON record per optimizer step.
    #[arg(long, value_name = "PATH")]
    log: Option<PathBuf>,
    /// Text embedding file, one `token v1 .. vd` per line.
    #[arg(long, value_name = "PATH")]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Fill history answers from the oracle instead of the gold answers.
    #[arg(long)]
    predicted_history: bool,
    #[command(flatten)]
    oracle: OracleArgs,
}

#[derive(Args)]
struct FinetuneArgs {
    /// Checkpoint to start from.
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    train: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    dev: Option<PathBuf>,
    #[arg(long, value_name = "PATH", default_value = "redr-rl.ckpt")]
    out: PathBuf,
    #[arg(long, value_name = "PATH")]
    log: Option<PathBuf>,
    #[arg(long)]
    max_updates: Option<usize>,
    #[command(flatten)]
    oracle: OracleArgs,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// SQuAD or CoQA JSON whose passages seed the conversations.
    #[arg(long, value_name = "PATH")]
    passages: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PassageFormat::Auto)]
    format: PassageFormat,
    /// Turns per conversation.
    #[arg(long)]
    turns: usize,
    /// CoQA-format output.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Full record with histories and scores.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Only the first N passages.
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    oracle: OracleArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// One whitespace-tokenized question per line.
    #[arg(long, value_name = "PATH")]
    hyp: Option<PathBuf>,
    #[arg(long = "ref", value_name = "PATH")]
    reference: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, value_name = "PATH")]
    questions: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum, default_value_t = OracleKind::Lexical)]
    oracle: OracleKind,
    /// Token the marker oracle rewards.
    #[arg(long, default_value = "please")]
    marker: String,
    /// Command line of an external answerer speaking line-delimited JSON.
    #[arg(long, value_name = "CMD")]
    oracle_cmd: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Lexical,
    Gold,
    Marker,
    Null,
    Pipe,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PassageFormat {
    Auto,
    Squad,
    Coqa,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            failure::report(&e);
            ExitCode::FAILURE
        }
    }
}
