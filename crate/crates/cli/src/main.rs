use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use backaction_cli::{run_single, run_sweep, CliError, Config, RunOptions};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "backaction", version, about = "Nuclear spin flip probabilities under spin-dependent tunneling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Population time series for one pulse.
    Simulate(Common),
    /// Final flip probabilities across a parameter sweep.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run description.
    #[arg(long)]
    config: PathBuf,
    /// CSV output path; overrides `output.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run the quantum-trajectory oracle.
    #[arg(long)]
    oracle: bool,
    /// Oracle seed; overrides `oracle.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(short, long)]
    verbose: bool,
}

fn execute(sweep: bool, c: Common) -> Result<(), CliError> {
    if let Some(n) = c.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let cfg = Config::load(&c.config)?;
    let opts = RunOptions { out: c.out, oracle: c.oracle, seed: c.seed };
    let report = if sweep { run_sweep(&cfg, &opts)? } else { run_single(&cfg, &opts)? };
    log::info!("wrote {} rows to {}", report.rows, report.csv.display());
    let _ = writeln!(std::io::stdout(), "{}", report.csv.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (sweep, common) = match cli.command {
        Command::Simulate(c) => (false, c),
        Command::Sweep(c) => (true, c),
    };
    let level = if common.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(sweep, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
