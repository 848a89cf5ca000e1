//! `covgraph`: fit, evaluate and simulate covariance graph models.
//!
//! Exit status: 0 on success, 2 when a fit did not converge, 1 on any input
//! or usage error.

mod args;
mod commands;
mod input;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Outcome of a successful command run.
pub enum Status {
    Ok,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Loglik(a) => commands::loglik(a),
        Command::Compare(a) => commands::compare(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Informational messages on stderr, silenced by `COVGRAPH_QUIET`.
pub fn note(msg: &str) {
    if std::env::var_os("COVGRAPH_QUIET").is_none_or(|v| v.is_empty() || v == "0") {
        eprintln!("note: {msg}");
    }
}
