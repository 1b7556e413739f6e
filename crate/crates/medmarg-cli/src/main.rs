mod commands;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::spec::{CliError, Config};

#[derive(Parser)]
#[command(
    name = "medmarg",
    version,
    about = "Median-based marginal distributions: evaluation, approximation, testing, estimation"
)]
struct Cli {
    /// Plain-text key=value file supplying defaults for omitted flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory; falls back to MEDMARG_OUT_DIR, then the working
    /// directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let config = match Config::load(cli.config.as_deref()) {
        Ok(config) => config,
        Err(CliError::Usage(msg)) | Err(CliError::Numerical(msg)) => {
            eprintln!("usage error: {msg}");
            return ExitCode::from(1);
        }
    };
    match commands::run(&cli.command, &config, cli.out.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
