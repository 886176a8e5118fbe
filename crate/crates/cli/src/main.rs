//! `calrec`: ingest, train, calibrate, distill, recommend, evaluate.
//!
//! Exit status: 0 on success, 1 on I/O failure, 2 on invalid input or
//! configuration.

mod bundle;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "calrec", version, about = "Calibrated personalized ranking: train, calibrate, distill, recommend, evaluate")]
struct Cli {
    /// Config file of `key = value` lines (see `calrec config`).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key; repeatable, applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Index a raw `user,item[,timestamp]` file and split it per user.
    Ingest(commands::ingest::Args),
    /// Train a matrix-factorization ranker.
    Train(commands::train::Args),
    /// Fit a score-to-probability calibrator and report ECE.
    Calibrate(commands::calibrate::Args),
    /// Co-train a teacher and a student with bidirectional distillation.
    Distill(commands::distill::Args),
    /// Write per-user recommendations, fixed-K or personalized-K.
    Recommend(commands::recommend::Args),
    /// Score recommendation files against a held-out split.
    Eval(commands::eval::Args),
    /// Print every config key with its effective value.
    Config(commands::show_config::Args),
    /// Generate a seeded low-rank synthetic interaction file.
    Synth(commands::synth::Args),
}

/// Config namespaces each subcommand reads.
const NAMESPACES: &[(&str, &[&str])] = &[
    ("ingest", &["seed", "data"]),
    ("train", &["seed", "train"]),
    ("calibrate", &["seed", "calib"]),
    ("distill", &["seed", "train", "bd", "eval"]),
    ("recommend", &["perk", "eval"]),
    ("eval", &["eval"]),
];

fn command() -> clap::Command {
    let defaults = RunConfig::default();
    let mut cmd = Cli::command().after_long_help(format!("Config keys and defaults:\n\n{}", defaults.reference()));
    for (name, namespaces) in NAMESPACES {
        let help = format!("Config keys read by this command, with defaults:\n\n{}", defaults.reference_for(namespaces));
        cmd = cmd.mut_subcommand(*name, |sub| sub.after_help(help));
    }
    cmd
}

/// 1 when an I/O error caused the failure, 2 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|e| {
        e.is::<std::io::Error>()
            || matches!(e.downcast_ref::<calrec::Error>(), Some(calrec::Error::Io { .. }))
            || e.downcast_ref::<serde_json::Error>().is_some_and(|j| j.is_io())
    });
    if io { 1 } else { 2 }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Ingest(a) => commands::ingest::run(&cfg, a),
        Command::Train(a) => commands::train::run(&cfg, a),
        Command::Calibrate(a) => commands::calibrate::run(&cfg, a),
        Command::Distill(a) => commands::distill::run(&cfg, a),
        Command::Recommend(a) => commands::recommend::run(&cfg, a),
        Command::Eval(a) => commands::eval::run(&cfg, a),
        Command::Config(a) => commands::show_config::run(&cfg, a),
        Command::Synth(a) => commands::synth::run(a),
    }
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
