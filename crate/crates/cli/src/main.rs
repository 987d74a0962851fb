use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbt_cli::{run, Command, Invocation};

/// Randomized benchmarking tomography: simulate, fit, reconstruct and
/// test single-qubit gates, and scan pulse discretizations.
#[derive(Parser)]
#[command(name = "rbt", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// All data stages: sequences, simulation, fits, reconstruction, witnesses.
    Pipeline(Common),
    GenSequences(Common),
    Simulate(Common),
    Fit(Common),
    Reconstruct(Common),
    Witness(Common),
    /// Pulse infidelity and leakage over time steps, Trotter orders and DRAG.
    PulseScan(Common),
    /// Print the JSON schema of the config file.
    Schema,
}

#[derive(Args)]
struct Common {
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding upstream stage files (defaults to the output dir).
    #[arg(long)]
    stage_input: Option<PathBuf>,
}

impl From<Common> for Invocation {
    fn from(c: Common) -> Self {
        Invocation {
            config: c.config,
            seed: c.seed,
            out: c.out,
            stage_input: c.stage_input,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Pipeline(c) => (Command::Pipeline, c),
        Cmd::GenSequences(c) => (Command::GenSequences, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Fit(c) => (Command::Fit, c),
        Cmd::Reconstruct(c) => (Command::Reconstruct, c),
        Cmd::Witness(c) => (Command::Witness, c),
        Cmd::PulseScan(c) => (Command::PulseScan, c),
        Cmd::Schema => {
            print!("{}", rbt_cli::config::config_schema());
            return ExitCode::SUCCESS;
        }
    };
    match run(command, &common.into()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
