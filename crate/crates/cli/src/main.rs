use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = leechsim_cli::Cli::parse();
    match leechsim_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
