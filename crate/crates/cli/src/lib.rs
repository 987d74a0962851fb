//! Configuration, stage files and commands of the `rbt` pipeline.

pub mod config;
pub mod error;
pub mod stages;
pub mod tables;
pub mod workspace;

use std::path::PathBuf;

pub use config::{load_config, parse_config, ConfigError, RunConfig};
pub use error::CliError;
pub use workspace::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Pipeline,
    GenSequences,
    Simulate,
    Fit,
    Reconstruct,
    Witness,
    PulseScan,
}

pub const DEFAULT_OUT_DIR: &str = "rbt-out";

/// Options shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub stage_input: Option<PathBuf>,
}

/// Runs one command, removing its partial outputs on failure. Returns the
/// files written.
pub fn run(command: Command, inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let mut config = match &inv.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = inv.seed {
        config.seed = seed;
    }
    let out = inv
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let mut ws = Workspace::new(config, out, inv.stage_input.clone());
    let result = match command {
        Command::Pipeline => stages::pipeline(&mut ws),
        Command::GenSequences => stages::gen_sequences(&mut ws),
        Command::Simulate => stages::simulate(&mut ws),
        Command::Fit => stages::fit(&mut ws),
        Command::Reconstruct => stages::reconstruct(&mut ws),
        Command::Witness => stages::witness(&mut ws),
        Command::PulseScan => stages::pulse_scan(&mut ws),
    };
    match result {
        Ok(()) => Ok(ws.written().to_vec()),
        Err(e) => {
            ws.cleanup();
            Err(e)
        }
    }
}
