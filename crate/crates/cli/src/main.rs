use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match jointcqa_cli::run(jointcqa_cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
