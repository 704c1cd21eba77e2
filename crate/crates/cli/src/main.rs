//! `ristrack`: run Monte-Carlo studies and write their results as CSV.
//!
//! Exit status is 0 on success, 2 for configuration errors (bad arguments,
//! unreadable or invalid files) and 3 for numeric failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ristrack_core::bals::check_identifiability;
use ristrack_core::channel::SystemConfig;
use ristrack_core::harness::{preset, run_experiment_with, write_csv, Execution, ExperimentSpec, Figure, Scale};
use ristrack_core::Error;

#[derive(Parser)]
#[command(name = "ristrack", version, about = "Channel estimation and tracking experiments for RIS-assisted uplinks")]
struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON spec.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `base.rng_seed` in the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 1 runs sequentially.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run one of the built-in figure studies.
    Figure {
        #[arg(long)]
        id: Figure,
        #[arg(long, default_value = "desk")]
        scale: Scale,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Report which uniqueness condition a configuration satisfies.
    CheckIdentifiability {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericFailure(_) | Error::Divergence { .. } | Error::AmbiguityUnresolvable { .. } => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn execution(jobs: Option<usize>) -> Result<Execution, Error> {
    match jobs {
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => Ok(Execution::Parallel { jobs: Some(n) }),
        None => Ok(Execution::default()),
    }
}

fn run_spec(mut spec: ExperimentSpec, out: &Path, seed: Option<u64>, jobs: Option<usize>) -> Result<(), Error> {
    if let Some(seed) = seed {
        spec.base.rng_seed = seed;
    }
    let exec = execution(jobs)?;
    let records = run_experiment_with(&spec, exec)?;
    let diverged = records.iter().filter(|r| r.diverged).count();
    write_csv(&records, out)?;
    log::info!("wrote {} rows to {} ({diverged} diverged)", records.len(), out.display());
    if !records.is_empty() && diverged == records.len() {
        return Err(Error::NumericFailure(format!("all {diverged} rows diverged")));
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { spec, out, seed, jobs } => {
            let spec = ExperimentSpec::from_json(&read(&spec)?)?;
            run_spec(spec, &out, seed, jobs)
        }
        Command::Figure {
            id,
            scale,
            out,
            seed,
            jobs,
        } => {
            let spec = preset(id, scale);
            // Timings are only comparable without competing workers.
            let jobs = if id == Figure::Runtime { Some(1) } else { jobs };
            run_spec(spec, &out, seed, jobs)
        }
        Command::CheckIdentifiability { config } => {
            let cfg = SystemConfig::from_json(&read(&config)?)?;
            println!(
                "{} (L = {}, S = {}, K = {})",
                check_identifiability(&cfg),
                cfg.n_profiles,
                cfg.pilot_len,
                cfg.n_ris
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ristrack: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
