//! `frg`: run junction flows, phase scans and kernel checks from a flat
//! configuration file.
//!
//! Exit status is 0 on success, 1 on a numerical or I/O failure and 2 on a
//! configuration error. `manifest.json` is written in every case once the
//! output directory is known.

mod config;
mod runs;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

use config::{Model, RunConfig};
use runs::{Outcome, RunError};

/// Worker threads for parallel scans; defaults to the available parallelism.
const WORKERS_ENV: &str = "FRG_WORKERS";

#[derive(Parser)]
#[command(name = "frg", version, about = "Renormalization group flows of a dissipative Josephson junction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a single flow (model = doublewell, cosine or kernel).
    Run {
        config: PathBuf,
    },
    /// Compare the finite-line kernel with its continuum limit (model = kernel).
    Kernel {
        config: PathBuf,
    },
    /// Locate critical points or fit the exponent (model = scan_doublewell,
    /// scan_cosine or exponent).
    Sweep {
        config: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run { .. } => "run",
            Command::Kernel { .. } => "kernel",
            Command::Sweep { .. } => "sweep",
        }
    }

    fn accepts(&self, model: Model) -> bool {
        match self {
            Command::Run { .. } => matches!(model, Model::DoubleWell | Model::Cosine | Model::Kernel),
            Command::Kernel { .. } => model == Model::Kernel,
            Command::Sweep { .. } => matches!(model, Model::ScanDoubleWell | Model::ScanCosine | Model::Exponent),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_path: String,
    status: &'static str,
    error: Option<String>,
    /// The configuration as written, in file order.
    config: Vec<(String, String)>,
    /// Every parameter the run used, defaults included.
    resolved: &'a Map<String, Value>,
    workers: usize,
    terminal_reasons: &'a BTreeMap<String, usize>,
    outputs: &'a [String],
    summary: BTreeMap<&'a str, &'a str>,
    timings: BTreeMap<&'static str, f64>,
}

struct Report {
    status: &'static str,
    error: Option<String>,
    code: u8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command;
    let (Command::Run { config } | Command::Kernel { config } | Command::Sweep { config }) = &command;
    ExitCode::from(execute(&command, config))
}

fn execute(command: &Command, path: &Path) -> u8 {
    let started = Instant::now();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return 2;
        }
    };
    let workers = match init_workers() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };

    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(errors) => {
            for e in &errors {
                eprintln!("{}: {e}", path.display());
            }
            let dir = config::output_dir_hint(&text).unwrap_or_else(|| PathBuf::from("."));
            let report = Report {
                status: "config_error",
                error: Some(errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")),
                code: 2,
            };
            let raw = text
                .lines()
                .filter_map(|l| l.split('#').next()?.split_once('='))
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                .collect();
            write_manifest(&dir, command, path, raw, &Map::new(), workers, &Outcome::default(), &report, started);
            return 2;
        }
    };
    let dir = cfg.output_dir();
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return 1;
    }

    let (outcome, report) = if !command.accepts(cfg.model) {
        let msg = format!("model {} cannot be used with `frg {}`", cfg.model, command.name());
        (Outcome::default(), Report { status: "config_error", error: Some(msg), code: 2 })
    } else {
        match runs::dispatch(&mut cfg, &dir) {
            Ok(out) => {
                let report = match &out.failure {
                    None => Report { status: "ok", error: None, code: 0 },
                    Some(f) => Report { status: "numerical_failure", error: Some(f.clone()), code: 1 },
                };
                (out, report)
            }
            Err(e) => {
                let (status, code) = match e {
                    RunError::Config(_) | RunError::Parameters(_) => ("config_error", 2),
                    RunError::Numerical(_) => ("numerical_failure", 1),
                    RunError::Io { .. } => ("io_error", 1),
                };
                (Outcome::default(), Report { status, error: Some(e.to_string()), code })
            }
        }
    };

    for (k, v) in &outcome.summary {
        println!("{k}={v}");
    }
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    let raw = cfg.raw.clone();
    write_manifest(&dir, command, path, raw, cfg.resolved(), workers, &outcome, &report, started);
    report.code
}

/// Sizes the global thread pool from the environment.
fn init_workers() -> Result<usize, String> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => return Err(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")),
        },
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    Ok(n)
}

#[allow(clippy::too_many_arguments)]
fn write_manifest(
    dir: &Path,
    command: &Command,
    path: &Path,
    config: Vec<(String, String)>,
    resolved: &Map<String, Value>,
    workers: usize,
    outcome: &Outcome,
    report: &Report,
    started: Instant,
) {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        config_path: path.display().to_string(),
        status: report.status,
        error: report.error.clone(),
        config,
        resolved,
        workers,
        terminal_reasons: &outcome.terminal_reasons,
        outputs: &outcome.outputs,
        summary: outcome.summary.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
        timings: BTreeMap::from([("total_seconds", started.elapsed().as_secs_f64())]),
    };
    let written = fs::create_dir_all(dir).and_then(|_| {
        let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        fs::write(dir.join("manifest.json"), json + "\n")
    });
    if let Err(e) = written {
        eprintln!("error: cannot write manifest in {}: {e}", dir.display());
    }
}
