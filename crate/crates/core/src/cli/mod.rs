//! The `cmalab` command line: argument handling, output files and exit codes.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{Config, ConfigError, NamedSpec};

use crate::geodesic::GeodesicError;
use crate::grid::{write_bin, write_csv, GridError, ScalarField};
use crate::oracles::OracleError;
use crate::solver::SolverError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyGeometry,
    SolveTorus,
    SolveDirichlet,
    SolveGeodesic,
    SweepEpsilon,
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyGeometry => "verify-geometry",
            Command::SolveTorus => "solve-torus",
            Command::SolveDirichlet => "solve-dirichlet",
            Command::SolveGeodesic => "solve-geodesic",
            Command::SweepEpsilon => "sweep-epsilon",
            Command::OracleCheck => "oracle-check",
        }
    }
}

/// Format of field dumps. The summary is always JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Bin,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Bin => "bin",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, false)
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.ext())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cmalab", version, about = "Finite-difference solvers and checks for complex Monge-Ampère equations")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// run configuration; every key has a default
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// output directory, overriding `[output] dir`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// field dump format, overriding `[output] format`
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    CheckFailed,
    Rejected,
    NotConverged,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::CheckFailed | Status::Error => EXIT_CHECK_FAILED,
            Status::Rejected => EXIT_REJECTED,
            Status::NotConverged => EXIT_NOT_CONVERGED,
        }
    }
}

#[derive(Debug, Error)]
enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Rejected(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Io(String),
}

impl RunError {
    fn status(&self) -> Status {
        match self {
            RunError::Config(_) | RunError::Rejected(_) => Status::Rejected,
            RunError::NotConverged(_) => Status::NotConverged,
            RunError::Io(_) => Status::Error,
        }
    }
}

impl From<SolverError> for RunError {
    fn from(e: SolverError) -> Self {
        if e.is_rejection() {
            RunError::Rejected(e.to_string())
        } else {
            RunError::NotConverged(e.to_string())
        }
    }
}

impl From<GridError> for RunError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::Io(e) => RunError::Io(e.to_string()),
            e => RunError::Rejected(e.to_string()),
        }
    }
}

impl From<OracleError> for RunError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Solver(e) => e.into(),
            OracleError::Grid(e) => e.into(),
            e => RunError::Rejected(e.to_string()),
        }
    }
}

impl From<GeodesicError> for RunError {
    fn from(e: GeodesicError) -> Self {
        match e {
            GeodesicError::Solver(e) => e.into(),
            GeodesicError::Grid(e) => e.into(),
            GeodesicError::Io(e) => RunError::Io(e.to_string()),
            e => RunError::Rejected(e.to_string()),
        }
    }
}

impl From<crate::ma::MaError> for RunError {
    fn from(e: crate::ma::MaError) -> Self {
        RunError::Rejected(e.to_string())
    }
}

impl From<crate::geom::GeomError> for RunError {
    fn from(e: crate::geom::GeomError) -> Self {
        RunError::Rejected(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Result of a subcommand that ran to the end: a status and the payload
/// that goes into `summary.json`.
struct Outcome {
    status: Status,
    reason: Option<String>,
    result: Value,
}

impl Outcome {
    fn new(result: Value) -> Self {
        Outcome { status: Status::Ok, reason: None, result }
    }

    /// Downgrades the status; a worse status is never overwritten.
    fn mark(&mut self, status: Status, reason: impl Into<String>) {
        if self.status == Status::Ok || (self.status == Status::CheckFailed && status == Status::NotConverged) {
            self.status = status;
            self.reason = Some(reason.into());
        }
    }
}

struct Output {
    dir: PathBuf,
    format: Format,
    files: Vec<String>,
}

impl Output {
    fn dump(&mut self, stem: &str, field: &ScalarField) -> Result<(), RunError> {
        let name = format!("{stem}.{}", self.format.ext());
        let path = self.dir.join(&name);
        match self.format {
            Format::Bin => write_bin(field, &path)?,
            Format::Csv => write_csv(field, &path)?,
            Format::Json => {
                let doc = json!({ "grid": field.grid().as_ref(), "values": field.values() });
                fs::write(&path, serde_json::to_vec(&doc).expect("field serializes"))?;
            }
        }
        self.files.push(name);
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        fs::write(self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("CMA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| format!("CMA_THREADS = '{raw}' is not a thread count"))?;
    if n > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn write_summary(dir: &Path, summary: &Value) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    fs::write(dir.join("summary.json"), text)
}

fn rejection(command: Command, reason: &str) -> Value {
    json!({
        "subcommand": command.name(),
        "status": Status::Rejected,
        "exit_code": EXIT_REJECTED,
        "reason": reason,
    })
}

/// Parses the process arguments and runs; returns the exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_REJECTED } else { EXIT_OK };
        }
    };
    run(&args)
}

/// Runs one subcommand. The summary goes to `<out>/summary.json` and to
/// stdout; diagnostics go to stderr.
pub fn run(args: &Args) -> i32 {
    let command = args.command;
    if let Err(msg) = configure_threads() {
        eprintln!("{}", rejection(command, &msg));
        return EXIT_REJECTED;
    }
    let cfg = match &args.config {
        Some(path) => Config::from_file(path),
        None => Ok(Config::default()),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            let summary = rejection(command, &e.to_string());
            eprintln!("{summary}");
            if let Some(dir) = &args.out {
                let _ = write_summary(dir, &summary);
            }
            return EXIT_REJECTED;
        }
    };
    let dir = cfg.str_or("output", "dir", "out");
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from(dir));
    let format = match cfg.get_or("output", "format", Format::Bin) {
        Ok(f) => args.format.unwrap_or(f),
        Err(e) => {
            let summary = rejection(command, &e.to_string());
            eprintln!("{summary}");
            let _ = write_summary(&dir, &summary);
            return EXIT_REJECTED;
        }
    };
    cfg.record("output", "dir", dir.display().to_string());
    cfg.record("output", "format", format.to_string());
    let mut out = Output { dir: dir.clone(), format, files: Vec::new() };
    let outcome = fs::create_dir_all(&dir)
        .map_err(RunError::from)
        .and_then(|_| commands::dispatch(command, &cfg, &mut out));
    let (status, reason, result) = match outcome {
        Ok(o) => (o.status, o.reason, o.result),
        Err(e) => (e.status(), Some(e.to_string()), Value::Null),
    };
    let summary = json!({
        "subcommand": command.name(),
        "status": status,
        "exit_code": status.exit_code(),
        "reason": reason,
        "format": format,
        "config": cfg.resolved(),
        "files": out.files,
        "result": result,
    });
    if let Err(e) = write_summary(&dir, &summary) {
        eprintln!("cannot write {}: {e}", dir.join("summary.json").display());
        return EXIT_CHECK_FAILED;
    }
    if let Some(r) = &reason {
        eprintln!("{}: {r}", command.name());
    }
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    status.exit_code()
}
