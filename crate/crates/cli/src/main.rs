//! `fsta` — train, evaluate, and analyze desk-scale spiking networks with
//! frequency-based spatial-temporal attention.
//!
//! Exit codes: 0 success, 1 invalid invocation or inputs, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use fsta_cli::commands::{
    cmd_compare, cmd_energy, cmd_eval, cmd_gen_data, cmd_spectrum, cmd_train,
};
use fsta_cli::config::{parse_config, CommandKind};
use fsta_cli::CliError;

#[derive(Parser)]
#[command(
    name = "fsta",
    version,
    about = "Spiking-network training and spectral analysis workbench",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration document (TOML).
    #[arg(long, short = 'c')]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a network; writes metrics.csv, firing.csv, and a checkpoint.
    Train(RunArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(RunArgs),
    /// Run traced inference and write spectral reports.
    Spectrum(RunArgs),
    /// Count operations and price them in joules.
    Energy(RunArgs),
    /// Compare two firing.csv reports.
    Compare(RunArgs),
    /// Materialize a synthetic dataset as tensor containers.
    GenData(RunArgs),
}

impl Cmd {
    fn kind(&self) -> CommandKind {
        match self {
            Cmd::Train(_) => CommandKind::Train,
            Cmd::Eval(_) => CommandKind::Eval,
            Cmd::Spectrum(_) => CommandKind::Spectrum,
            Cmd::Energy(_) => CommandKind::Energy,
            Cmd::Compare(_) => CommandKind::Compare,
            Cmd::GenData(_) => CommandKind::GenData,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Cmd::Train(a)
            | Cmd::Eval(a)
            | Cmd::Spectrum(a)
            | Cmd::Energy(a)
            | Cmd::Compare(a)
            | Cmd::GenData(a) => a,
        }
    }
}

fn dispatch(cmd: &Cmd) -> Result<(), CliError> {
    let args = cmd.args();
    let mut cfg = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.validate(cmd.kind())?;

    match cmd {
        Cmd::Train(_) => cmd_train(&cfg).map(drop),
        Cmd::Eval(_) => cmd_eval(&cfg).map(drop),
        Cmd::Spectrum(_) => cmd_spectrum(&cfg).map(drop),
        Cmd::Energy(_) => cmd_energy(&cfg).map(drop),
        Cmd::Compare(_) => cmd_compare(&cfg).map(drop),
        Cmd::GenData(_) => cmd_gen_data(&cfg).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outcomes; everything else is
            // an invalid invocation and exits 1 with the usage text.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
