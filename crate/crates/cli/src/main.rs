use std::process::ExitCode;

use clap::Parser;
use mtmc::cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match mtmc::commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
