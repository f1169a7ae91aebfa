//! The `keydetect` command line.
//!
//! Subcommands: `ingest`, `eval-anomaly`, `train`, `serve`, `report`. Every
//! run first prints its effective configuration as one JSON line. Exit codes
//! are 0 on success, 1 for usage errors, 2 for bad input data and 3 for
//! runtime failures.

pub mod args;
pub mod commands;
pub mod error;
pub mod pipeline;

pub use args::{Cli, Command};
pub use error::{CliError, Result};

pub fn run(cli: &Cli) -> Result<()> {
    let config = serde_json::to_string(cli).map_err(|e| CliError::runtime("config", e))?;
    println!("config: {config}");
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::EvalAnomaly(a) => commands::eval_anomaly(a),
        Command::Train(a) => commands::train(a, cli.seed),
        Command::Serve(a) => commands::serve(a),
        Command::Report(a) => commands::report(a),
    }
}
