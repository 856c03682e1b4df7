//! `proxyfactor`: command-line front end.
//!
//! Exit status: 0 success, 2 input error, 3 numerical failure,
//! 4 configuration error. Diagnostics go to stderr; stdout carries only the
//! one-line summary of each command.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use proxyfactor::{Error, ErrorClass};

use args::{Cli, Command};

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Input => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::Config => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::from(4);
        }
    }
    let result = match &cli.command {
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Test(a) => commands::test(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
