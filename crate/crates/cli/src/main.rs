//! `stripflow` batch front end.
//!
//! Exit codes: 0 completed, 2 validation failure, 3 breakdown (outputs are
//! still written), 4 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stripflow::scenario::{load_scenario, run, Mode, RunOptions};
use stripflow::Error;

#[derive(Parser)]
#[command(
    name = "stripflow",
    version,
    about = "Free-boundary evolution on a flattened strip"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its outputs.
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Evolve)]
        mode: ModeArg,
        /// Output directory (defaults to the scenario's `output.directory`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Zero the wall-clock field so reruns are byte-identical.
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Load and validate a scenario; prints the validation report as JSON.
    Validate { scenario: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Evolve,
    DiagnoseFrozen,
    DiagnoseCoercivity,
    DiagnoseLocalization,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Evolve => Mode::Evolve,
            ModeArg::DiagnoseFrozen => Mode::DiagnoseFrozen,
            ModeArg::DiagnoseCoercivity => Mode::DiagnoseCoercivity,
            ModeArg::DiagnoseLocalization => Mode::DiagnoseLocalization,
        }
    }
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_INTERNAL: u8 = 4;

fn load_failure(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Parse(_) | Error::Schema(_) | Error::Validation(_) | Error::Inadmissible { .. } => {
            ExitCode::from(EXIT_VALIDATION)
        }
        Error::Ellipticity { .. } | Error::DegenerateDomain { .. } | Error::InvalidInput(_) => {
            ExitCode::from(EXIT_VALIDATION)
        }
        // unreadable scenario file
        Error::Io(_) => ExitCode::from(EXIT_VALIDATION),
        _ => ExitCode::from(EXIT_INTERNAL),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = stripflow::par::init_threads(stripflow::par::threads_from_env()) {
        eprintln!("warning: thread pool: {e}");
    }
    match cli.command {
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(v) => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&v.report).expect("report serializes")
                );
                println!("checksum {}", v.scenario.checksum());
                ExitCode::SUCCESS
            }
            Err(e) => load_failure(e),
        },
        Command::Run {
            scenario,
            mode,
            out,
            deterministic,
            seed,
        } => {
            let v = match load_scenario(&scenario) {
                Ok(v) => v,
                Err(e) => return load_failure(e),
            };
            let opts = RunOptions {
                out,
                deterministic,
                seed,
                ..Default::default()
            };
            match run(&v, mode.into(), &opts) {
                Ok((manifest, dir)) => {
                    println!("{:?} -> {}", manifest.status, dir.display());
                    if let Some(m) = &manifest.message {
                        eprintln!("{m}");
                    }
                    for (name, ok) in &manifest.acceptance {
                        println!("  {name}: {}", if *ok { "pass" } else { "FAIL" });
                    }
                    ExitCode::from(manifest.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_INTERNAL)
                }
            }
        }
    }
}
