//! Command-line front end for the chartforge pipeline.

pub mod args;
pub mod manifest;
pub mod pipeline;
pub mod svg;

use std::io::Write;

pub use args::{Cli, Command};

/// Failure of one command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or settings; exit code 2.
    Usage(String),
    /// Anything that went wrong while running; exit code 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Runtime(e) => format!("{e:#}"),
        }
    }

    /// One-line JSON for machine consumers.
    pub fn json_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.message() }).to_string()
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

/// Runs one parsed command, writing progress and summaries to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => pipeline::cmd_synth(a, out).map(drop),
        Command::Train(a) => pipeline::cmd_train(a, out).map(drop),
        Command::Eval(a) => pipeline::cmd_eval(a, out).map(drop),
        Command::Baseline(a) => pipeline::cmd_baseline(a, out).map(drop),
    }
}

/// Caps the rayon pool at `CHARTFORGE_THREADS` when it is set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CHARTFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("CHARTFORGE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.into()))
}
