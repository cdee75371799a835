//! Command-line front end: data generation, training, evaluation, score
//! fusion and hypergraph inspection.

pub mod commands;
pub mod config;

use clap::{Parser, Subcommand};
use dsthcn::{Error, Result};

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "DSTHCN_THREADS";

#[derive(Parser, Debug)]
#[command(name = "dsthcn", version, about = "Hypergraph convolution for skeleton action recognition")]
pub struct Cli {
    /// Worker threads; falls back to DSTHCN_THREADS, then 1.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic labelled dataset.
    GenData(commands::GenDataArgs),
    /// Train one input stream.
    Train(commands::TrainArgs),
    /// Score a dataset with a checkpoint.
    Eval(commands::EvalArgs),
    /// Combine per-stream score tables.
    Fuse(commands::FuseArgs),
    /// Dump a hypergraph's incidence, weights and normalized operator.
    Inspect(commands::InspectArgs),
    /// Dump one block intermediate of one sample.
    ExportFeatures(commands::ExportArgs),
}

/// `--threads`, else the environment variable, else 1.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<usize> {
    let n = match (flag, env) {
        (Some(n), _) => n,
        (None, Some(s)) => s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}='{s}' is not a thread count")))?,
        (None, None) => 1,
    };
    if n == 0 {
        return Err(Error::Config("thread count must be positive".into()));
    }
    Ok(n)
}

pub fn run(cli: &Cli) -> Result<()> {
    let env = std::env::var(THREADS_ENV).ok();
    let threads = resolve_threads(cli.threads, env.as_deref())?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a).map(drop),
        Command::Fuse(a) => commands::fuse(a).map(drop),
        Command::Inspect(a) => commands::inspect(a),
        Command::ExportFeatures(a) => commands::export_features(a),
    }
}
