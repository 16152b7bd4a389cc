use std::process::ExitCode;

use clap::Parser;
use llfl_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match llfl_cli::init_threads().and_then(|()| llfl_cli::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("llfl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
