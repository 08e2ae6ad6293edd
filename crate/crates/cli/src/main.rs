//! `moral`: curate a QA benchmark, train MoRAL adapters on a toy model and
//! evaluate it in open-book, closed-book and cross settings.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use moral_core::evaluation::EvalMode;
use moral_core::Error;

use commands::Outcome;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "moral", version, about)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for model init, shuffling and the train/test split.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Use the offline generator, judge and embedder even if live ones are configured.
    #[arg(long, global = true)]
    stub_clients: bool,
    /// Overrides `out_dir` from the config.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk the corpus, generate questions and ground truths, split train/test.
    Curate {
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
    },
    /// Rebuild the chunk index from the corpus.
    Index {
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
    },
    /// Fine-tune the adapters on the training split.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate the trained model on the test split.
    Eval {
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Merge the per-mode reports into one table.
    Report,
    /// Finite-difference audit of the adapter gradients on a tiny model.
    Gradcheck {
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        d_model: Option<usize>,
        #[arg(long)]
        n_experts: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Open,
    Closed,
    Cross,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Client { .. } | Error::Evaluation(_) | Error::State(_) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = cli.out_dir {
        cfg.out_dir = dir;
    }
    match &cli.command {
        Command::Curate { corpus: Some(c) } | Command::Index { corpus: Some(c) } => cfg.corpus = c.clone(),
        Command::Train { epochs: Some(n) } => cfg.train.epochs = *n,
        Command::Gradcheck {
            epsilon,
            d_model,
            n_experts,
            rank,
        } => {
            let g = &mut cfg.gradcheck;
            g.epsilon = epsilon.unwrap_or(g.epsilon);
            g.d_model = d_model.unwrap_or(g.d_model);
            g.d_ff = d_model.map_or(g.d_ff, |d| 2 * d);
            g.n_experts = n_experts.unwrap_or(g.n_experts);
            g.rank = rank.unwrap_or(g.rank);
        }
        _ => {}
    }
    let cfg = cfg.finish()?;
    let stub = cli.stub_clients;
    match cli.command {
        Command::Curate { .. } => commands::curate_cmd(&cfg, stub),
        Command::Index { .. } => commands::index_cmd(&cfg, stub),
        Command::Train { .. } => commands::train_cmd(&cfg),
        Command::Eval { mode } => {
            let mode = match mode {
                Mode::Open => EvalMode::Open,
                Mode::Closed => EvalMode::Closed,
                Mode::Cross => EvalMode::Cross,
            };
            commands::eval_cmd(&cfg, mode, stub)
        }
        Command::Report => commands::report_cmd(&cfg),
        Command::Gradcheck { .. } => commands::gradcheck_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => {
            eprintln!("warning: evaluation finished with record-level failures");
            ExitCode::from(3)
        }
        Ok(Outcome::CheckFailed) => {
            eprintln!("error: gradient check exceeded its threshold");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
