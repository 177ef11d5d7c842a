//! The `pathcalc` command-line driver.
//!
//! Exit codes: 0 when every check passes, 2 when a property fails, 1 on a
//! usage, configuration or runtime error. Errors are reported on one line as
//! `pathcalc: error[<kind>]: <reason>`.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Serialize;

pub use commands::Outcome;
pub use config::{Format, Opts, RunConfig, DEFAULT_SEED, SEED_ENV};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_FAIL: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "pathcalc", version, about = "Pathwise checks of functional Itô calculus identities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a seeded ensemble and summarize it
    Simulate(Opts),
    /// Functional Itô formula for a smooth functional
    Ito(Opts),
    /// Classical Tanaka formula for |x - K|
    Tanaka(Opts),
    /// Lévy identity for the running maximum
    Levy(Opts),
    /// Lévy identity for the running minimum
    LevyMin(Opts),
    /// Functional Meyer-Tanaka formula for a convex or concave functional
    MeyerTanaka(Opts),
    /// Occupation-time formula over the ψ catalogue
    Occupation(Opts),
    /// Quadratic variation against local-time mass
    QvIdentity(Opts),
    /// Max-martingale drift test at checkpoints
    Maxmart(Opts),
    /// Conditions on H of the max-martingale catalogue
    ConditionH(Opts),
    /// Recover ψ(m̄) from left space derivatives
    RecoverPsi(Opts),
    /// Mollification convergence table
    MollifyReport(Opts),
    /// The acceptance suite
    All(Opts),
}

impl Command {
    fn split(self) -> (&'static str, Opts) {
        match self {
            Command::Simulate(o) => ("simulate", o),
            Command::Ito(o) => ("ito", o),
            Command::Tanaka(o) => ("tanaka", o),
            Command::Levy(o) => ("levy", o),
            Command::LevyMin(o) => ("levy-min", o),
            Command::MeyerTanaka(o) => ("meyer-tanaka", o),
            Command::Occupation(o) => ("occupation", o),
            Command::QvIdentity(o) => ("qv-identity", o),
            Command::Maxmart(o) => ("maxmart", o),
            Command::ConditionH(o) => ("condition-h", o),
            Command::RecoverPsi(o) => ("recover-psi", o),
            Command::MollifyReport(o) => ("mollify-report", o),
            Command::All(o) => ("all", o),
        }
    }
}

/// Bad flags, missing options, unreadable configuration.
#[derive(Debug)]
pub struct UsageError(String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

enum Failure {
    Usage(UsageError),
    Run(pathcalc::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e)
    }
}

impl From<pathcalc::Error> for Failure {
    fn from(e: pathcalc::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Run(e.into())
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    timestamp: String,
    config: &'a RunConfig,
    report: &'a serde_json::Value,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `args` (program name first), runs the command and writes the
/// report. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_PASS
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = writeln!(err, "pathcalc: error[usage]: missing subcommand");
                    let _ = write!(err, "{}", e.render());
                    EXIT_ERROR
                }
                _ => {
                    let rendered = e.render().to_string();
                    let first = rendered.lines().next().unwrap_or("").trim_start_matches("error: ");
                    let _ = writeln!(err, "pathcalc: error[usage]: {}", one_line(first));
                    let _ = write!(err, "{rendered}");
                    EXIT_ERROR
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(passed) => {
            if passed {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(Failure::Usage(e)) => {
            let _ = writeln!(err, "pathcalc: error[usage]: {}", one_line(&e.0));
            EXIT_ERROR
        }
        Err(Failure::Run(e)) => {
            let _ = writeln!(err, "pathcalc: error[{}]: {}", e.kind(), one_line(&e.to_string()));
            EXIT_ERROR
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<bool, Failure> {
    let (name, opts) = cli.command.split();
    let cfg = opts.load()?.resolve(name, std::env::var(SEED_ENV).ok())?;
    let outcome = match cfg.threads {
        Some(0) => return Err(UsageError::new("--threads must be at least 1").into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| UsageError::new(format!("cannot start {n} worker threads: {e}")))?
            .install(|| commands::dispatch(&cfg))?,
        None => commands::dispatch(&cfg)?,
    };
    let bytes = match cfg.format {
        Format::Json => {
            let envelope = Envelope {
                schema_version: pathcalc::verify::SCHEMA_VERSION,
                timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                config: &cfg,
                report: &outcome.report,
            };
            let mut s = serde_json::to_string_pretty(&envelope)?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => outcome.csv,
    };
    match &cfg.out {
        Some(path) => std::fs::write(path, bytes)?,
        None => out.write_all(&bytes)?,
    }
    Ok(outcome.passed)
}
