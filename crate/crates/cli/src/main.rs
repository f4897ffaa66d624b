//! `auglag`: solve, audit and benchmark the catalog problems.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 solve did not
//! converge or a check/bench/sweep criterion failed.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use auglag::GradientMode;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{EXIT_CONFIG, EXIT_OK};
use crate::config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "auglag", version, about = "Exact augmented Lagrangian solver for the built-in variational benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write iterates, summary and solution files.
    Run(Common),
    /// Run a suite against its oracles and print a pass/fail table.
    Bench {
        /// `all`, `oc-only`, or a single benchmark id.
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// Gradient audit, adjoint probes and constraint-qualification checks.
    Check(Common),
    /// Fixed-penalty solves over a list of c against the oracle value.
    Sweep {
        /// Comma-separated ascending penalties.
        #[arg(long, value_delimiter = ',')]
        c_list: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Default)]
struct Common {
    /// Catalog id, e.g. iso-dirichlet.
    #[arg(long)]
    problem: Option<String>,
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    c0: Option<f64>,
    /// KKT tolerance (relative to 1 + |f|).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Seed of the audit probes.
    #[arg(long)]
    seed: Option<u64>,
    /// Inner iteration budget per penalty round.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Analytic,
    Fd,
}

impl Common {
    fn config(&self, c_list: Option<Vec<f64>>) -> anyhow::Result<RunConfig> {
        let o = Overrides {
            problem: self.problem.clone(),
            out: self.out.clone(),
            c0: self.c0,
            tol: self.tol,
            mode: self.mode.map(|m| match m {
                Mode::Analytic => GradientMode::Analytic,
                Mode::Fd => GradientMode::FiniteDifference,
            }),
            seed: self.seed,
            max_iter: self.max_iter,
            c_list,
        };
        RunConfig::load(self.config.as_deref())?.apply(&o)
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::Run(c) => commands::run(&c.config(None)?),
        Command::Bench { suite, common } => commands::bench(&common.config(None)?, &suite),
        Command::Check(c) => commands::check(&c.config(None)?),
        Command::Sweep { c_list, common } => commands::sweep(&common.config(c_list)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::from(EXIT_OK);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
