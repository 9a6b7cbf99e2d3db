//! Experiment runner. Three commands: `run` prints one report as JSON,
//! `sweep` prints a CSV over a suite file, `verify` prints every guarantee
//! check line by line. Exit codes are part of the interface: 0 all checks
//! pass, 1 a check failed, 2 bad input.

mod pipeline;
mod sweep;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mts", version, about = "Runs task-system controllers and verifies their cost guarantees")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one instance and print its report as JSON on stdout.
    Run {
        #[arg(long, value_enum)]
        algo: Algo,
        /// Instance file (JSON).
        #[arg(long)]
        instance: PathBuf,
        /// Parameter file (JSON); required for unfair runs.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Write a per-step CSV trace here (star, tree, unfair only).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write per-node records here as JSON (hst only).
        #[arg(long)]
        nodes: Option<PathBuf>,
    },
    /// Expand a suite file and print one CSV row per run.
    Sweep {
        /// Suite file (JSON).
        #[arg(long)]
        suite: PathBuf,
    },
    /// Run one instance and print the full check ledger as text.
    Verify {
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
pub enum Algo {
    Star,
    Tree,
    Unfair,
    Hst,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Star => "star",
            Algo::Tree => "tree",
            Algo::Unfair => "unfair",
            Algo::Hst => "hst",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run { algo, instance, params, trace, nodes } => {
            pipeline::cmd_run(algo, &instance, params.as_deref(), trace.as_deref(), nodes.as_deref())
        }
        Cmd::Sweep { suite } => sweep::cmd_sweep(&suite),
        Cmd::Verify { algo, instance, params } => {
            pipeline::cmd_verify(algo, &instance, params.as_deref())
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
