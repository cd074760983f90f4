//! `swgp` command-line front end.
//!
//! Exit codes: 0 on success, 1 on internal or numerical failure, 2 on usage
//! or input errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Internal(String),
}

impl From<swgp::Error> for CliError {
    fn from(e: swgp::Error) -> Self {
        use swgp::Error::*;
        match e {
            InvalidArgument(_)
            | InvalidHyperparameter(_)
            | InvalidIndex { .. }
            | DimensionMismatch { .. }
            | NonIncreasingTime { .. }
            | Empty(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

fn cli() -> Command {
    let mut cmd = Command::new("swgp")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Adaptive sliding-window Gaussian process filtering")
        .after_help("Set SWGP_THREADS to cap the number of worker threads.")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for name in commands::COMMANDS {
        let sub = Command::new(name).about(commands::about(name)).arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value file; flags take precedence"),
        );
        cmd = cmd.subcommand(settings::with_flags(sub, &commands::keys(name)));
    }
    cmd
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SWGP_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("SWGP_THREADS: expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Internal(e.to_string()))
}

fn real_main() -> Result<String, CliError> {
    let matches = cli().get_matches();
    init_threads()?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let s =
        settings::Settings::resolve(commands::keys(name), sub, sub.get_one::<PathBuf>("config").map(|p| p.as_path()))?;
    commands::run(name, &s)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_tree_is_consistent() {
        cli().debug_assert();
    }
}
