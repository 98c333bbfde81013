use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use orlicz_mp::commands::{self, Command, RunConfig};

/// Orlicz-Sobolev conjugates, hypothesis audits and mountain-pass solves
/// driven by a problem file.
#[derive(Parser, Debug)]
#[command(name = "orlicz-mp", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Problem file (`section.key = value` lines).
    input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replace a problem-file entry, e.g. `--override solver.max_iter=1`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Solve even when the audit reports a failed hypothesis.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_USAGE as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let rc = RunConfig {
        command: cli.command,
        input: cli.input,
        out: cli.out,
        overrides: cli.overrides,
        force: cli.force,
    };
    match commands::run(&rc) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code_for(&e) as u8)
        }
    }
}
