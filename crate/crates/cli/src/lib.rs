//! The `ttg` command-line tool: graph building, embedding caches, synthetic
//! data, retrieval runs, evaluation and parameter sweeps.

pub mod commands;
pub mod config;
pub mod runtime;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ttg", version, about = "Path retrieval over textual knowledge graphs")]
pub struct Cli {
    /// Log more (repeat for debug output). Logs go to stderr.
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a graph, build its triple graph and print a summary.
    Build(commands::build::BuildArgs),
    /// Precompute node and query embeddings into a cache file.
    EmbedCache(commands::embed_cache::EmbedCacheArgs),
    /// Generate synthetic graphs and queries.
    Synth(commands::synth::SynthArgs),
    /// Retrieve paths and answers for every query.
    Retrieve(commands::retrieve::RetrieveArgs),
    /// Score predictions against gold answers.
    Eval(commands::eval::EvalArgs),
    /// Run retrieval and evaluation over a parameter grid.
    Sweep(commands::sweep::SweepArgs),
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Build(a) => commands::build::run(a),
        Command::EmbedCache(a) => commands::embed_cache::run(a),
        Command::Synth(a) => commands::synth::run(a),
        Command::Retrieve(a) => commands::retrieve::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Sweep(a) => commands::sweep::run(a),
    }
}
