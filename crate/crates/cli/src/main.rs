use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match synmarket_cli::run(synmarket_cli::Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
