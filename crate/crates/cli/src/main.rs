use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ris_aoi_cli::config::{load_config, w_to_dbm, ConfigError};
use ris_aoi_cli::runlog::write_run_log;
use ris_aoi_cli::sweep::{run_sweep, write_csv, SweepSpec};
use ris_aoi_cli::{selftest, VERSION};
use ris_aoi_core::sim::run;

/// Log verbosity, read by env_logger (e.g. `RIS_AOI_LOG=debug`).
const LOG_ENV: &str = "RIS_AOI_LOG";

#[derive(Parser)]
#[command(name = "ris-aoi", version = VERSION, about = "Sum-AoI scheduling and beamforming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and print a JSON summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON-lines run log here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Sweep one parameter over several policies and write CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, seed, log } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            log::info!("ris-aoi {VERSION}, seed {}", cfg.seed);
            let metrics = run(&cfg).map_err(runtime)?;
            if let Some(path) = log {
                let mut w = create(&path)?;
                write_run_log(&cfg, &metrics, &mut w).and_then(|_| w.flush()).map_err(runtime)?;
            }
            let summary = serde_json::json!({
                "policy": metrics.policy,
                "seed": cfg.seed,
                "mean_sum_aoi": metrics.mean_sum_aoi,
                "time_avg_sum_aoi": metrics.time_avg_sum_aoi,
                "delivery_rate": metrics.delivery_rate,
                "infeasible_slots": metrics.infeasible_slots,
                "mean_harvest_dbm": metrics.mean_harvest.iter().map(|&h| w_to_dbm(h)).collect::<Vec<_>>(),
                "solver": metrics.solver,
            });
            println!("{}", serde_json::to_string_pretty(&summary).map_err(runtime)?);
            Ok(())
        }
        Command::Sweep { spec, out } => {
            let spec = SweepSpec::load(&spec)?;
            let out = out
                .or_else(|| spec.output.clone())
                .ok_or_else(|| Failure::Validation("no output path: pass --out or set `output`".into()))?;
            let rows = run_sweep(&spec).map_err(runtime)?;
            let mut w = create(&out)?;
            write_csv(&rows, &mut w).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            log::info!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err(Failure::Runtime("self-test failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
