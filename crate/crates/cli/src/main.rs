//! Command-line harness: seeds, splits, trains and scores models, and
//! leaves every run replayable from its output directory.
//!
//! Exit codes: 0 on success, 2 for usage or configuration problems,
//! 3 when training failed numerically.

mod args;
mod commands;
mod context;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Compare(a) => commands::compare(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(if e.is_numeric_failure() { 3 } else { 2 });
    }
}
