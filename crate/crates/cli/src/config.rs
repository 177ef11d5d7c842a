//! Run configuration: command-line flags merged over an optional JSON file.
//!
//! File keys are the flag names with `-` replaced by `_`; `K` and `H0` keep
//! their case.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use pathcalc::functionals::Psi;
use pathcalc::localtime::{default_dy, default_epsilon, BandPoint, Convention};
use pathcalc::paths::TimeGrid;
use pathcalc::simulate::{ProcessKind, SimSpec};
use pathcalc::suite::Scale;
use pathcalc::verify::BandConfig;

use crate::UsageError;

pub const SEED_ENV: &str = "PATHCALC_SEED";
pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Shift {
    None,
    RunningMax,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Opts {
    /// JSON file with default values for any of these options
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Process: brownian, drifted_brownian or scaled_brownian
    #[arg(long)]
    pub kind: Option<ProcessKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Number of grid steps N
    #[arg(long)]
    pub steps: Option<usize>,
    /// Horizon T
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Ensemble size
    #[arg(long)]
    pub paths: Option<usize>,
    /// Master seed; falls back to $PATHCALC_SEED
    #[arg(long)]
    pub seed: Option<u64>,

    /// Band half-width ε (default max(0.02, 0.6 N^-1/4))
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Level spacing (default ε/2)
    #[arg(long)]
    pub dy: Option<f64>,
    /// Local-time normalization: quarter (1/4ε) or half (1/2ε)
    #[arg(long)]
    pub convention: Option<Convention>,
    /// Band indicator position: left or midpoint
    #[arg(long)]
    pub band_point: Option<BandPoint>,

    /// Built-in functional name
    #[arg(long)]
    pub functional: Option<String>,
    /// Strike of abs_terminal_minus and of the classical Tanaka check
    #[arg(long = "K", allow_negative_numbers = true)]
    #[serde(rename = "K")]
    pub k: Option<f64>,
    /// ψ of the max-martingale catalogue: one, identity, square, exp_neg
    #[arg(long)]
    pub psi: Option<Psi>,
    #[arg(long = "H0", allow_negative_numbers = true)]
    #[serde(rename = "H0")]
    pub h0: Option<f64>,
    /// Checkpoint times, comma separated
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<f64>>,
    /// Finite-variation shift for meyer-tanaka
    #[arg(long)]
    pub shift: Option<Shift>,
    /// Also report the compensator trace (meyer-tanaka)
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub compensator: Option<bool>,
    /// Mollifier indices n, comma separated (mollify-report)
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    /// Gauss-Legendre nodes per panel (mollify-report)
    #[arg(long)]
    pub nodes: Option<usize>,

    /// Pass threshold; each subcommand has its own default
    #[arg(long)]
    pub tol: Option<f64>,
    /// Problem size of `all`: full or quick
    #[arg(long)]
    pub scale: Option<Scale>,
    /// Criteria of `all`, comma separated (default: every criterion)
    #[arg(long, value_delimiter = ',')]
    pub criteria: Option<Vec<u8>>,

    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Report destination (default: stdout)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Directory to dump simulated paths into as `t,value` CSV (simulate)
    #[arg(long, value_name = "DIR")]
    pub dump: Option<PathBuf>,
    /// Worker threads (default: available cores)
    #[arg(long)]
    pub threads: Option<usize>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl Opts {
    /// Fills every unset option from `file`.
    pub fn merge(mut self, file: Opts) -> Opts {
        merge_fields!(self, file;
            kind, x0, sigma, mu, steps, horizon, paths, seed,
            epsilon, dy, convention, band_point,
            functional, k, psi, h0, checkpoints, shift, compensator, n_list, nodes,
            tol, scale, criteria, format, out, dump, threads,
        );
        self
    }

    pub fn load(self) -> Result<Opts, UsageError> {
        let Some(file) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&file)
            .map_err(|e| UsageError::new(format!("cannot read config {}: {e}", file.display())))?;
        let parsed: Opts = serde_json::from_str(&text)
            .map_err(|e| UsageError::new(format!("bad config {}: {e}", file.display())))?;
        Ok(self.merge(parsed))
    }

    /// Applies defaults; the result is what every report embeds.
    pub fn resolve(self, command: &str, seed_env: Option<String>) -> Result<RunConfig, UsageError> {
        let seed = match (self.seed, seed_env) {
            (Some(s), _) => s,
            (None, Some(v)) => v
                .trim()
                .parse()
                .map_err(|_| UsageError::new(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?,
            (None, None) => DEFAULT_SEED,
        };
        let steps = self.steps.unwrap_or(1000);
        let horizon = self.horizon.unwrap_or(1.0);
        let epsilon = self.epsilon.unwrap_or_else(|| default_epsilon(steps));
        let checkpoints = self
            .checkpoints
            .unwrap_or_else(|| [0.25, 0.5, 0.75, 1.0].iter().map(|c| c * horizon).collect());
        Ok(RunConfig {
            command: command.to_string(),
            kind: self.kind.unwrap_or(ProcessKind::Brownian),
            x0: self.x0.unwrap_or(0.0),
            sigma: self.sigma.unwrap_or(1.0),
            mu: self.mu.unwrap_or(0.0),
            steps,
            horizon,
            paths: self.paths.unwrap_or(if command == "simulate" { 1 } else { 100 }),
            seed,
            epsilon,
            dy: self.dy.unwrap_or_else(|| default_dy(epsilon)),
            convention: self.convention.unwrap_or(Convention::Quarter),
            band_point: self.band_point.unwrap_or_default(),
            functional: self.functional,
            k: self.k,
            psi: self.psi,
            h0: self.h0.unwrap_or(0.0),
            checkpoints,
            shift: self.shift.unwrap_or(Shift::None),
            compensator: self.compensator.unwrap_or(false),
            n_list: self.n_list.unwrap_or_else(|| (0..9).map(|i| 1 << i).collect()),
            nodes: self.nodes.unwrap_or(pathcalc::mollify::DEFAULT_NODES),
            tol: self.tol,
            scale: self.scale.unwrap_or(Scale::Full),
            criteria: self.criteria.unwrap_or_else(pathcalc::suite::all_ids),
            format: self.format.unwrap_or(Format::Json),
            out: self.out,
            dump: self.dump,
            threads: self.threads,
        })
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub kind: ProcessKind,
    pub x0: f64,
    pub sigma: f64,
    pub mu: f64,
    pub steps: usize,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub dy: f64,
    pub convention: Convention,
    pub band_point: BandPoint,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functional: Option<String>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<Psi>,
    #[serde(rename = "H0")]
    pub h0: f64,
    pub checkpoints: Vec<f64>,
    pub shift: Shift,
    pub compensator: bool,
    pub n_list: Vec<usize>,
    pub nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    pub scale: Scale,
    pub criteria: Vec<u8>,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn sim_spec(&self) -> pathcalc::Result<SimSpec> {
        let spec = SimSpec {
            kind: self.kind,
            x0: self.x0,
            sigma: self.sigma,
            mu: self.mu,
            grid: TimeGrid::new(self.horizon, self.steps)?,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn band(&self) -> pathcalc::Result<BandConfig> {
        let mut band = BandConfig::new(self.epsilon, self.dy)?.with_convention(self.convention);
        band.band_point = self.band_point;
        Ok(band)
    }

    pub fn require_functional(&self) -> Result<&str, UsageError> {
        self.functional
            .as_deref()
            .ok_or_else(|| UsageError::new(format!("`{}` needs --functional", self.command)))
    }

    pub fn require_k(&self) -> Result<f64, UsageError> {
        self.k.ok_or_else(|| UsageError::new(format!("`{}` needs --K", self.command)))
    }

    /// ψ values a catalogue command runs over: the one given, else all.
    pub fn psi_list(&self) -> Vec<Psi> {
        self.psi.map(|p| vec![p]).unwrap_or_else(|| Psi::ALL.to_vec())
    }
}
