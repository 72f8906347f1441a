use std::path::PathBuf;
use std::process::ExitCode;

use apfold_cli::error::CliError;
use apfold_cli::{run_scenario, sweep, Request};
use clap::{Parser, Subcommand};

/// Ambrosetti–Prodi fold analysis on radial grids.
#[derive(Parser)]
#[command(name = "apfold", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Output directory; overrides $APFOLD_OUTPUT_DIR and `run.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the weight, nonlinearity and slope hypotheses.
    Check(Common),
    /// First eigenpair: eigen.csv and eigen.json.
    Eigen(Common),
    /// Lower-branch solution at `run.t`.
    Solve(Common),
    /// Trace the solution branch through the fold.
    Branch(Common),
    /// Locate the fold by arclength and by bisection.
    Alpha(Common),
    /// Both solutions below the fold, with deflation and nonexistence checks.
    Two(Common),
    /// Run the a priori checks on stored solutions.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Directory of solution sidecars; defaults to `<out>/solutions`.
        #[arg(long)]
        solutions: Option<PathBuf>,
    },
    /// Run each config's `run.stages` concurrently.
    Sweep {
        configs: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Base directory; scenario `s` writes to `<out>/s`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn single(common: Common, request: Request) -> Result<u8, CliError> {
    let result = run_scenario(&common.config, &request, common.out.as_deref())?;
    if let Some(msg) = &result.verification_failure {
        eprintln!("apfold: {msg}");
    }
    println!("{}", result.output_dir.join("manifest.json").display());
    Ok(result.exit_code())
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let stage = |s: &str| Request::Stages(vec![s.to_string()]);
    match cli.command {
        Command::Check(c) => single(c, stage("check")),
        Command::Eigen(c) => single(c, stage("eigen")),
        Command::Solve(c) => single(c, stage("solve")),
        Command::Branch(c) => single(c, stage("branch")),
        Command::Alpha(c) => single(c, stage("alpha")),
        Command::Two(c) => single(c, stage("two")),
        Command::Verify { common, solutions } => single(common, Request::Verify { solutions }),
        Command::Sweep { configs, workers, out } => {
            let entries = sweep(&configs, workers, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&entries).expect("sweep summary serializes"));
            Ok(entries.iter().map(|e| e.exit_code).max().unwrap_or(0))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are config errors; help and version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("apfold: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
