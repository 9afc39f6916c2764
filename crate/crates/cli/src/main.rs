//! `bbfp`: command-line driver for quantization experiments and reports.
//!
//! Exit status: 0 success, 1 a requested check failed, 2 invalid usage or
//! configuration, 3 a file could not be read, parsed or written.

mod args;
mod commands;
mod error;
mod report;

use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bbfp: {e}");
            e.exit_code()
        }
    }
}
