use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phaseq::{load_config, run, ExperimentKind};

/// Pulse-level phase-qubit simulator.
#[derive(Parser)]
#[command(name = "phaseq", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its result files.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: ExperimentKind,
    /// TOML configuration, or a JSON snapshot from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; each run writes to its own subdirectory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set system.t1=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let Command::Run(args) = Cli::parse().command;
    let outcome = load_config(args.config.as_deref(), &args.set).and_then(|cfg| run(args.experiment, &cfg, args.out.as_deref()));
    match outcome {
        Ok(out) => {
            // A closed pipe on stdout is not a run failure.
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", out.result.summary);
            for f in &out.files {
                let _ = writeln!(stdout, "{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("phaseq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
