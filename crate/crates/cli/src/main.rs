//! `edgeburst` — lossy-ladder evolution, spectral scans, exact references,
//! readout calibration, and error mitigation from one binary.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edgeburst_cli::commands;
use edgeburst_cli::Result;

#[derive(Parser)]
#[command(name = "edgeburst", version, about = "Digital simulation of lossy ladder lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to a TOML experiment configuration.
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a built-in preset configuration.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory (created if absent).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the configuration's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for scan points, noise scales, and twirls.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured time evolution and write run artifacts.
    Evolve(RunArgs),
    /// Scan the hopping ratio; compare purified decay rates to exact gaps.
    Spectral(RunArgs),
    /// Write exact-diagonalization reference tables for the configuration.
    Oracle(RunArgs),
    /// Estimate per-sub-register readout confusion under the noise model.
    Calibrate(RunArgs),
    /// Apply readout inversion and zero-noise extrapolation to a stored run.
    Mitigate {
        /// Run directory written by `evolve` (with counts.csv and times.csv).
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
        /// Calibration JSON (defaults to <run>/calibration.json).
        #[arg(long, value_name = "FILE")]
        calibration: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn set_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        std::env::set_var("RAYON_NUM_THREADS", n.to_string());
    }
}

fn run_verb(args: &RunArgs, verb: &str) -> Result<()> {
    set_threads(args.threads);
    let src = commands::load_config(args.config.as_deref(), args.preset.as_deref(), args.seed)?;
    let out_dir = commands::resolve_out_dir(args.out.as_deref(), &src, verb)?;
    match verb {
        "evolve" => commands::cmd_evolve(&src, &out_dir),
        "spectral" => commands::cmd_spectral(&src, &out_dir),
        "oracle" => commands::cmd_oracle(&src, &out_dir),
        "calibrate" => commands::cmd_calibrate(&src, &out_dir),
        _ => unreachable!("unknown verb"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Evolve(args) => run_verb(args, "evolve"),
        Command::Spectral(args) => run_verb(args, "spectral"),
        Command::Oracle(args) => run_verb(args, "oracle"),
        Command::Calibrate(args) => run_verb(args, "calibrate"),
        Command::Mitigate {
            run,
            calibration,
            threads,
        } => {
            set_threads(*threads);
            commands::cmd_mitigate(run, calibration.as_deref())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
