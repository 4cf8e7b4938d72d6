use std::process::ExitCode;

use clap::Parser;
use crowbar_core::cli::{run_cli, Cli};

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run_cli(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
