use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qpassage_cli::{exit, run, CliError, Command, RunConfig};

#[derive(Parser)]
#[command(name = "qpassage", version, about = "Arrival- and passage-time simulations for a detector made of a two-level system and a boson bath")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML configuration; built-in defaults are used when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads
    #[arg(long, global = true, env = "QPASSAGE_THREADS")]
    threads: Option<usize>,
    /// Also write a matplotlib script for the CSV tables
    #[arg(long, global = true)]
    emit_plots: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// First-detection density at detector 1
    Arrival,
    /// Passage-time density between the two detectors
    Passage,
    /// Position and momentum profiles of reset states
    ResetState,
    /// Finite-bath reset density against the continuum limit
    DiscreteCompare,
    /// Kijowski arrival-time density of the free packet
    Kijowski,
    /// Optimal passage-time width over a range of velocities
    PrecisionSweep,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Arrival => Command::Arrival,
            Sub::Passage => Command::Passage,
            Sub::ResetState => Command::ResetState,
            Sub::DiscreteCompare => Command::DiscreteCompare,
            Sub::Kijowski => Command::Kijowski,
            Sub::PrecisionSweep => Command::PrecisionSweep,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(execute(&cli) as u8)
}

fn execute(cli: &Cli) -> i32 {
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return exit::INVALID_INPUT;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return exit::RUNTIME;
        }
    }
    let result = cli
        .config
        .as_deref()
        .map_or_else(|| Ok(RunConfig::default()), RunConfig::from_path)
        .and_then(|cfg| run(cli.command.into(), &cfg, &cli.out, cli.emit_plots));
    match result {
        Ok(outcome) => {
            for w in &outcome.summary.warnings {
                eprintln!("warning: {w}");
            }
            if outcome.exit_code == exit::NOT_CONVERGED {
                eprintln!("error: convergence check failed, see {}", cli.out.join("summary.json").display());
            }
            println!("{}", serde_json::to_string_pretty(&outcome.summary.results).unwrap_or_default());
            outcome.exit_code
        }
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
