//! `kgcp`: train, evaluate, export and inspect CP knowledge-graph embeddings.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error,
//! 3 gradient check above tolerance. Telemetry goes to standard error,
//! results to standard output.

mod args;
mod commands;
mod manifest;
mod settings;

use std::process::ExitCode;

use clap::Parser;
use kgcp_core::meter::CountingAlloc;

use args::{Cli, Command};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or paths the user must fix before retrying.
    Usage(anyhow::Error),
    /// Anything that went wrong while doing the work.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn usage(msg: impl std::fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

pub type CmdResult = Result<ExitCode, Failure>;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_TOLERANCE: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Train(a) => commands::train::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Export(a) => commands::export::run(a),
        Command::Stats(a) => commands::stats::run(a),
        Command::Gradcheck(a) => commands::gradcheck::run(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
