//! `rdn`: synthesize training pairs, train, describe, match and evaluate.

mod config;
mod describe;
mod eval;
mod matching;
mod overlay;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(thiserror::Error, Debug)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rdn_core::Error),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "rdn", version, about = "Region-aware dense descriptors: train, describe, match, evaluate")]
struct Cli {
    /// Configuration file of `key = value` lines (default: ./rdn.conf if present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a corpus of warped image pairs with ground truth and a manifest.
    Synth(synth::SynthArgs),
    /// Train descriptor weights on a manifest of pairs.
    Train(train::TrainArgs),
    /// Sample descriptors on a keypoint grid and write a descriptor file.
    Describe(describe::DescribeArgs),
    /// Match two descriptor files, optionally screening with RANSAC.
    Match(matching::MatchArgs),
    /// Matching accuracy on a manifest, split into flat and textured keypoints.
    Eval(eval::EvalArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => synth::run(&a, &cfg),
        Command::Train(a) => train::run(&a, &cfg),
        Command::Describe(a) => describe::run(&a, &cfg),
        Command::Match(a) => matching::run(&a, &cfg),
        Command::Eval(a) => eval::run(&a, &cfg),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let end = ["Usage:", "For more information"].iter().filter_map(|m| msg.find(m)).min().unwrap_or(msg.len());
            let head = &msg[..end];
            let head = one_line(head.trim().trim_start_matches("error:"));
            eprintln!("error: usage: {}", if head.is_empty() { "invalid arguments" } else { &head });
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.category(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
