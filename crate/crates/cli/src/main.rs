use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod artifact;
mod commands;
mod error;

use error::CliError;

/// Retrieval-augmented named entity recognition toolkit.
#[derive(Debug, Parser)]
#[command(name = "corrner", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Overrides the seed of single-run steps (synth, train, pipeline).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for every parallel section [default: available cores].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// error, warn, info, debug or trace. RUST_LOG is used when absent.
    #[arg(long, global = true)]
    pub log_level: Option<log::LevelFilter>,
    /// Redo steps whose outputs are already up to date.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic address benchmark.
    Synth(commands::SynthArgs),
    /// Build or query a BM25 index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Train a CRF tagger.
    Train(commands::TrainArgs),
    /// Tag sentences with a trained model.
    Tag(commands::TagArgs),
    /// Tag and re-type entities by voting over retrieved samples.
    Calibrate(commands::CalibrateArgs),
    /// Score predictions against gold annotations.
    Eval(commands::EvalArgs),
    /// Multi-seed sweep along one axis.
    Sweep(commands::SweepArgs),
    /// synth, index, train, tag, calibrate and eval in one go.
    Pipeline(commands::PipelineArgs),
}

#[derive(Debug, Subcommand)]
enum IndexCommand {
    /// Index a pool file (one text per line).
    Build(commands::IndexBuildArgs),
    /// Print the top-k hits for a query as JSON.
    Query(commands::IndexQueryArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(g, &a),
        Command::Index(IndexCommand::Build(a)) => commands::index_build(g, &a),
        Command::Index(IndexCommand::Query(a)) => commands::index_query(&a),
        Command::Train(a) => commands::train(g, &a),
        Command::Tag(a) => commands::tag(g, &a),
        Command::Calibrate(a) => commands::calibrate(g, &a),
        Command::Eval(a) => commands::eval(g, &a),
        Command::Sweep(a) => commands::sweep(g, &a),
        Command::Pipeline(a) => commands::pipeline(g, &a),
    }
}

fn init_logging(level: Option<log::LevelFilter>) {
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    if let Some(l) = level {
        b.filter_level(l);
    }
    b.target(env_logger::Target::Stderr).format_timestamp(None).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging(cli.global.log_level);
    let outcome = std::panic::catch_unwind(|| run(cli));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
        // the panic hook has already printed the message
        Err(_) => ExitCode::from(3),
    }
}
