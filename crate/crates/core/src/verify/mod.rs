//! Both sides of the pathwise identities, assembled term by term.
//!
//! Conventions shared by every check on a path `x_0, ..., x_N`:
//!
//! * `X_j` is the path restricted to `[0, t_j]`; its strict prefix is
//!   `hist_j` (values `x_0..x_{j-1}`).
//! * `Δ_t f` is evaluated at `X_j`, i.e. at `(hist_j, x_j)`.
//! * Space derivatives are evaluated on the one-step flat extension of `X_j`,
//!   i.e. at `(hist_{j+1}, x_j)`.
//! * Stochastic integrals are left-point sums.

mod ito;
mod martingale;
mod report;
mod tanaka;

use serde::{Deserialize, Serialize};

pub use ito::{
    check_functional_ito, check_occupation, check_occupation_running_integral, qv_identity,
};
pub use martingale::{
    check_condition_h, check_local_martingale_condition, check_max_martingale, drift_test,
    sample_checkpoints, recover_psi, CheckpointSamples, CheckpointStat, ConditionHReport,
    DriftReport, ProbeGrid, RecoveredPsi, CONDITION_H_STEP, CONDITION_H_TOL,
    LOCAL_MARTINGALE_TOL,
};
pub use report::{Config, EnsembleReport, MeanStats, PathRow, Term, VerificationReport, SCHEMA_VERSION};
pub use tanaka::{
    check_classical_tanaka, check_increasing_functional, check_levy_max, check_levy_min,
    check_meyer_tanaka, MeyerTanaka,
};

use crate::error::{argument, Result};
use crate::localtime::{default_dy, default_epsilon, BandPoint, Convention, LevelGrid, LocalTimeField};
use crate::paths::{Path, PrefixStats};
use crate::simulate::{map_ensemble, SimSpec};

/// Band-counting parameters for every local-time estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub epsilon: f64,
    pub dy: f64,
    pub convention: Convention,
    pub band_point: BandPoint,
}

impl BandConfig {
    pub fn new(epsilon: f64, dy: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(argument(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(dy.is_finite() && dy > 0.0) {
            return Err(argument(format!("dy must be > 0, got {dy}")));
        }
        Ok(Self { epsilon, dy, convention: Convention::Quarter, band_point: BandPoint::Left })
    }

    /// Defaults for an `N`-step grid.
    pub fn for_steps(steps: usize) -> Self {
        let epsilon = default_epsilon(steps);
        Self { epsilon, dy: default_dy(epsilon), convention: Convention::Quarter, band_point: BandPoint::Left }
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    /// Local time of `band` (driven by the quadratic variation of `driver`)
    /// on a grid anchored at `anchor` that covers the band range and the
    /// anchor itself.
    pub(crate) fn field(&self, band: &[f64], driver: &Path, anchor: f64) -> Result<LocalTimeField> {
        let (lo, hi) = band
            .iter()
            .fold((anchor, anchor), |(a, b), &v| (a.min(v), b.max(v)));
        let margin = 3.0 * self.epsilon;
        let levels = LevelGrid::covering(anchor, self.dy, lo - margin, hi + margin)?;
        LocalTimeField::build(band, driver, &levels, self.epsilon, self.convention, self.band_point)
    }

    pub(crate) fn annotate(&self, report: VerificationReport, path: &Path) -> VerificationReport {
        report
            .with_config("N", path.end_index())
            .with_config("T", path.end_time())
            .with_config("epsilon", self.epsilon)
            .with_config("dy", self.dy)
            .with_config("convention", self.convention.name())
    }
}

/// `hist_0, ..., hist_{N+1}`: `hist_j` is the strict prefix of `X_j`, and
/// `hist_{N+1}` the prefix of the one-step extension of `X_N`.
pub(crate) fn prefixes(path: &Path) -> Vec<PrefixStats> {
    let mut out = Vec::with_capacity(path.end_index() + 2);
    let mut p = PrefixStats::start(path.grid());
    out.push(p);
    for &v in &path.values()[..=path.end_index()] {
        p.advance(v);
        out.push(p);
    }
    out
}

/// Runs a pathwise check on every member of a seeded ensemble.
pub fn run_ensemble<F>(identity: &str, spec: &SimSpec, n_paths: usize, check: F) -> Result<EnsembleReport>
where
    F: Fn(&Path) -> Result<VerificationReport> + Sync,
{
    let reports = map_ensemble(spec, n_paths, |_, path| check(path))?;
    Ok(EnsembleReport::from_reports(identity, &reports)
        .with_config("N", spec.grid.steps())
        .with_config("T", spec.grid.horizon())
        .with_config("seed", spec.seed)
        .with_config("paths", n_paths))
}
