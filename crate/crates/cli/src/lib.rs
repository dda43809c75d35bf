//! Command line front end for the raceway pond model.
//!
//! Thin orchestration only: parse flags, load the config, call
//! `raceway-core`, and write `result.json`, `table.csv`, `profile.csv`,
//! `timing.json`, and the SVG plots into the output directory. All
//! parallelism lives in the core search; this crate stays single
//! threaded so artifacts are byte-identical for any worker count.

pub mod args;
pub mod commands;
pub mod json;
pub mod svg;

use clap::Parser;

/// Parses the process arguments, runs the command, and returns the exit
/// code. Failures are reported as one compact JSON line on stderr plus
/// an `error.json` in the output directory.
pub fn run() -> i32 {
    let cli = args::Cli::parse();
    let out_dir = cli.command.out_dir().to_path_buf();
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(failure) => {
            failure.emit(&out_dir);
            1
        }
    }
}
