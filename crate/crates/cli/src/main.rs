use clap::{Parser, Subcommand};
use mei_cli::run::{run_control, run_dispatch, run_plan, run_validate, DispatchArgs};
use std::path::PathBuf;
use std::process::ExitCode;

/// Multi-carrier micro energy internet toolkit.
#[derive(Parser)]
#[command(name = "mei", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a scenario file and report what it contains.
    Validate { file: PathBuf },
    /// Pick a component portfolio covering the scenario's peak demand.
    Plan { file: PathBuf },
    /// Dispatch the scenario and write CSV reports.
    Dispatch {
        file: PathBuf,
        /// Run length in hours; must be a whole number of scenario steps.
        #[arg(long)]
        hours: f64,
        /// Force autonomous operation with zero utility exchange.
        #[arg(long)]
        islanded: bool,
        /// Dispatch as a storage-led game instead of one joint optimization.
        #[arg(long)]
        stackelberg: bool,
        /// Directory for the report artifacts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize state feedback for the scenario's dynamics sections.
    Control {
        file: PathBuf,
        /// Disturbance attenuation level; defaults to the [ems] setting.
        #[arg(long)]
        gamma: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version land here too; only real usage mistakes
            // should exit nonzero, and never with the infeasibility code.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Validate { file } => run_validate(&file),
        Command::Plan { file } => run_plan(&file),
        Command::Dispatch {
            file,
            hours,
            islanded,
            stackelberg,
            out,
        } => run_dispatch(
            &file,
            DispatchArgs {
                hours,
                islanded,
                stackelberg,
            },
            &out,
        ),
        Command::Control { file, gamma } => run_control(&file, gamma),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
