//! The `llfl` command line: synthetic data, task splits, sequential training,
//! evaluation and slice analysis, each writing a manifest of its inputs and outputs.

pub mod args;
pub mod commands;
mod error;
pub mod manifest;
pub mod model_file;
pub mod settings;

pub use error::{CliError, CliResult};

use args::{Cli, Command};
use settings::Settings;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "LLFL_THREADS";

/// Sizes the global worker pool from [`THREADS_ENV`], if set.
pub fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // A pool that already exists (tests running in one process) is left as is.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut s = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => commands::synth(&mut s, a),
        Command::Split(a) => commands::split(&mut s, a),
        Command::Train(a) => commands::train(&mut s, a),
        Command::Eval(a) => commands::eval(&mut s, a),
        Command::Analyze(a) => commands::analyze(&mut s, a),
    }
}
