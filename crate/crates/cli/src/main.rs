//! `screwlab`: bulk invariants, dislocation spectra and their comparison.
//!
//! Exit codes: 0 success or agreement, 1 disagreement, 2 numerical or I/O
//! failure, 3 configuration or usage error.

mod commands;
mod config;
mod report;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Command, RunError};
use config::Overrides;
use store::{Artifacts, DirLock};

const EXIT_DISAGREE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "screwlab", version, about = "Weak invariants against screw-dislocation spectral flow")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `outputs.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all available cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    kz_count: Option<usize>,
    /// Brillouin grid per direction for Chern numbers.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Weak Chern vector from both Chern estimators.
    BulkInvariants,
    /// kz sweep of the dislocated lattice: spectra, flow, winding and σ.
    DislocationSpectrum,
    /// Bulk, prediction and dislocation run, with agreement flags.
    Verify,
    /// Predicted dislocation index from the weak vector and Burgers vector.
    Predict,
    /// Norm bound and multiplicativity of the kernel lift on random kernels.
    LiftTest,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::BulkInvariants => Command::Bulk,
            Sub::DislocationSpectrum => Command::Dislocation,
            Sub::Verify => Command::Verify,
            Sub::Predict => Command::Predict,
            Sub::LiftTest => Command::LiftTest,
        }
    }
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Some(config_path) = cli.config.clone() else {
        return fail(EXIT_CONFIG, "--config is required");
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return fail(EXIT_CONFIG, "--threads must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            return fail(EXIT_NUMERICAL, e);
        }
    }
    let overrides = Overrides { out: cli.out.clone(), kz_count: cli.kz_count, grid: cli.grid, seed: cli.seed };
    let resolved = match config::load(&config_path, &overrides) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let command = Command::from(cli.command);
    let out_dir = resolved.config.outputs.directory.clone();
    let _lock = match DirLock::acquire(&out_dir) {
        Ok(lock) => lock,
        Err(e) => return fail(EXIT_NUMERICAL, e),
    };

    let key = format!("{}-{}-{}", resolved.hash, command.name(), env!("CARGO_PKG_VERSION"));
    let artifacts = match store::load_cached(&out_dir, &key) {
        Ok(Some(hit)) => {
            eprintln!("cache hit {key}");
            hit
        }
        Ok(None) => match commands::run(command, &resolved) {
            Ok(outcome) => {
                let mut report_json = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
                report_json.push('\n');
                let fresh = Artifacts { report_json, tables: outcome.tables };
                if let Err(e) = store::store_cached(&out_dir, &key, &fresh) {
                    return fail(EXIT_NUMERICAL, e);
                }
                fresh
            }
            Err(e @ RunError::Config(_)) => return fail(EXIT_CONFIG, e),
            Err(e @ RunError::Numerical(_)) => return fail(EXIT_NUMERICAL, e),
        },
        Err(e) => return fail(EXIT_NUMERICAL, e),
    };
    let report: report::InvariantReport = match serde_json::from_str(&artifacts.report_json) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_NUMERICAL, format!("unreadable cached report: {e}")),
    };
    if let Err(e) = store::emit(&out_dir, &artifacts, &resolved.config.outputs.formats) {
        return fail(EXIT_NUMERICAL, e);
    }
    summarize(command, &report);
    match report.agrees() {
        Some(false) => ExitCode::from(EXIT_DISAGREE),
        _ => ExitCode::SUCCESS,
    }
}

fn summarize(command: Command, r: &report::InvariantReport) {
    if command == Command::Predict {
        if let Some(p) = r.predicted_index {
            println!("{p}");
        }
        return;
    }
    if let Some(w) = r.weak_vector {
        println!("weak_vector {:?}", w.0);
    }
    if let Some(p) = r.predicted_index {
        println!("predicted_index {p}");
    }
    if let Some(f) = &r.flow {
        println!("spectral_flow {} (per core {:?}, unfiltered {})", f.spectral_flow, f.per_core, f.unfiltered);
    }
    if let Some(e) = r.localized_winding {
        println!("localized_winding {:.6}", e.value);
    }
    if let Some(e) = r.sigma_screw {
        println!("sigma_screw {:.6}", e.value);
    }
    for note in &r.notes {
        println!("note: {note}");
    }
    if let Some(a) = r.agreement {
        println!("agreement {}", a.all);
    }
    if let Some(l) = &r.lift {
        println!(
            "lift trials {} norm bound failures {} support failures {}",
            l.trials, l.norm_bound_failures, l.support_failures
        );
    }
}
