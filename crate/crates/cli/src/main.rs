//! `genplan`: parse, expand, augment, train, execute and evaluate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use genplan_core::state_space::Partition;
use genplan_core::training::LossKind;

use crate::config::{ModeSelection, Overrides};

/// Failure classes, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl Failure {
    fn status(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "genplan", version, about = "Learn and evaluate generalized value functions for planning")]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use this single training seed, overriding the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeSelection>,
    #[arg(long, global = true, value_parser = parse_loss)]
    loss: Option<LossKind>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate the configured domain and instances, plus any
    /// extra instance files given.
    Parse { files: Vec<PathBuf> },
    /// Expand state spaces, label them with V* and write datasets.
    Expand {
        /// Partitions to expand (default: train and validation).
        #[arg(long, value_parser = parse_partition)]
        partition: Vec<Partition>,
    },
    /// Show the augmented predicates and derived atoms of initial states.
    Augment {
        /// Print the augmented domain as PDDL.
        #[arg(long)]
        pddl: bool,
    },
    /// Train value networks and keep the best validation checkpoint.
    Train,
    /// Run the greedy policy of a checkpoint on the test instances.
    Exec {
        /// Include states in the trace files.
        #[arg(long)]
        with_states: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Execute, compute optimal lengths and write coverage reports.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients on random states.
    Gradcheck {
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 20)]
        states: usize,
        /// Parameter seeds, starting at `--seed`.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Print a generated instance.
    Generate {
        /// Bundled domain name.
        #[arg(long)]
        domain: String,
        /// Generator sizes, e.g. `3` or `3,2,1`.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
}

fn parse_partition(s: &str) -> Result<Partition, String> {
    s.parse()
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, loss: self.loss, mode: self.mode, out: self.out.clone(), jobs: self.jobs }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.status())
        }
    }
}
