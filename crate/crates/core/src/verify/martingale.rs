use std::io::Write;

use serde::Serialize;

use super::{prefixes, BandConfig, Config, MeanStats, VerificationReport, SCHEMA_VERSION};
use crate::error::{argument, Result};
use crate::functionals::{
    default_steps, left_slope, space_derivative_est, Functional, MaxMartingale, Side, DEFAULT_H0, DEFAULT_LEVELS,
};
use crate::paths::Path;
use crate::simulate::{map_ensemble, SimSpec};

/// Finite-difference step for the H-conditions.
pub const CONDITION_H_STEP: f64 = 1e-4;
/// Pass threshold of the H-conditions, relative to `max(1, max |H|)`.
pub const CONDITION_H_TOL: f64 = 1e-5;
/// Bound on the normalized local-martingale statistic.
pub const LOCAL_MARTINGALE_TOL: f64 = 0.1;

/// `(x_t, m̄_t)` of every ensemble member at each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointSamples {
    pub times: Vec<f64>,
    pub samples: Vec<Vec<(f64, f64)>>,
    #[serde(skip)]
    pub config: Config,
}

pub fn sample_checkpoints(spec: &SimSpec, n_paths: usize, checkpoints: &[f64]) -> Result<CheckpointSamples> {
    if checkpoints.is_empty() {
        return Err(argument("need at least one checkpoint"));
    }
    let indices = checkpoints
        .iter()
        .map(|&t| spec.grid.index_at_or_before(t))
        .collect::<Result<Vec<_>>>()?;
    let per_path = map_ensemble(spec, n_paths, |_, path| {
        let running = path.running_max_trace();
        Ok(indices.iter().map(|&i| (path.values()[i], running[i])).collect::<Vec<_>>())
    })?;
    let samples = (0..indices.len())
        .map(|c| per_path.iter().map(|row| row[c]).collect())
        .collect();
    let mut config = Config::new();
    config.insert("N".into(), spec.grid.steps().into());
    config.insert("T".into(), spec.grid.horizon().into());
    config.insert("seed".into(), spec.seed.into());
    config.insert("paths".into(), n_paths.into());
    config.insert("x0".into(), spec.x0.into());
    Ok(CheckpointSamples { times: indices.iter().map(|&i| spec.grid.time(i)).collect(), samples, config })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckpointStat {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    /// `|mean - target| / se`.
    pub z: f64,
    pub passed: bool,
}

/// Monte Carlo test that `E H(x_t, m̄_t)` stays at its initial value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub schema_version: u32,
    pub identity: String,
    pub config: Config,
    pub target: f64,
    pub checkpoints: Vec<CheckpointStat>,
    pub passed: bool,
}

impl DriftReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["schema_version", "identity", "t", "mean", "se", "z", "passed"])?;
        for c in &self.checkpoints {
            w.write_record([
                SCHEMA_VERSION.to_string(),
                self.identity.clone(),
                c.t.to_string(),
                c.mean.to_string(),
                c.se.to_string(),
                c.z.to_string(),
                c.passed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Passes when every checkpoint mean is within 3 standard errors of `target`.
pub fn drift_test(identity: &str, samples: &CheckpointSamples, h: impl Fn(f64, f64) -> f64, target: f64) -> DriftReport {
    let checkpoints: Vec<CheckpointStat> = samples
        .times
        .iter()
        .zip(&samples.samples)
        .map(|(&t, xs)| {
            let values: Vec<f64> = xs.iter().map(|&(x1, x2)| h(x1, x2)).collect();
            let s = MeanStats::of(&values);
            let z = s.z_score(target);
            CheckpointStat { t, mean: s.mean, se: s.se, z, passed: z < 3.0 }
        })
        .collect();
    DriftReport {
        schema_version: SCHEMA_VERSION,
        identity: identity.to_string(),
        config: samples.config.clone(),
        target,
        passed: checkpoints.iter().all(|c| c.passed),
        checkpoints,
    }
}

/// `H(x_1, x_2) = Ψ(x_2) - ψ(x_2)(x_2 - x_1) + H_0` along a seeded ensemble
/// started at 0.
pub fn check_max_martingale(psi: crate::functionals::Psi, h0: f64, spec: &SimSpec, n_paths: usize, checkpoints: &[f64]) -> Result<DriftReport> {
    if spec.x0 != 0.0 {
        return Err(crate::error::domain(format!("max-martingales are checked from x0 = 0, got {}", spec.x0)));
    }
    let f = MaxMartingale::new(psi, h0);
    let samples = sample_checkpoints(spec, n_paths, checkpoints)?;
    let mut report = drift_test(&format!("max_martingale[{}]", psi.name()), &samples, |a, b| f.h(a, b), f.h(0.0, 0.0));
    report.config.insert("psi".into(), psi.name().into());
    report.config.insert("H0".into(), h0.into());
    Ok(report)
}

/// Rectangle of `(x_1, x_2)` probe points; the diagonal uses the `x_2` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeGrid {
    pub x1: (f64, f64),
    pub x2: (f64, f64),
    pub points: usize,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self { x1: (-2.0, 2.0), x2: (0.0, 2.0), points: 21 }
    }
}

fn linspace((a, b): (f64, f64), n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionHReport {
    pub schema_version: u32,
    pub identity: String,
    pub max_d11: f64,
    pub max_d2_diagonal: f64,
    pub scale: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// `∂_11 H = 0` on the grid and `∂_2 H(z, z) = 0` on the diagonal, by central
/// differences with step [`CONDITION_H_STEP`].
pub fn check_condition_h(name: &str, h: impl Fn(f64, f64) -> f64, grid: &ProbeGrid) -> ConditionHReport {
    let s = CONDITION_H_STEP;
    let xs1 = linspace(grid.x1, grid.points);
    let xs2 = linspace(grid.x2, grid.points);
    let mut max_d11 = 0.0f64;
    let mut scale = 1.0f64;
    for &a in &xs1 {
        for &b in &xs2 {
            let c = h(a, b);
            scale = scale.max(c.abs());
            max_d11 = max_d11.max(((h(a + s, b) - 2.0 * c + h(a - s, b)) / (s * s)).abs());
        }
    }
    let max_d2_diagonal = xs2
        .iter()
        .map(|&z| ((h(z, z + s) - h(z, z - s)) / (2.0 * s)).abs())
        .fold(0.0, f64::max);
    let threshold = CONDITION_H_TOL * scale;
    ConditionHReport {
        schema_version: SCHEMA_VERSION,
        identity: format!("condition_h[{name}]"),
        max_d11,
        max_d2_diagonal,
        scale,
        threshold,
        passed: max_d11 < threshold && max_d2_diagonal < threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveredPsi {
    pub recovered: f64,
    /// `ψ(m̄(Y))`.
    pub expected: f64,
    /// Extrapolation residual of the estimator.
    pub residual: f64,
    pub error: f64,
    pub passed: bool,
}

/// Left space derivative of a max-martingale functional, compared with
/// `ψ(m̄(Y))`.
pub fn recover_psi(f: &MaxMartingale, path: &Path) -> Result<RecoveredPsi> {
    let est = space_derivative_est(f, path, Side::Left, &default_steps(DEFAULT_H0, DEFAULT_LEVELS))?;
    let running = path.running_max_trace();
    let expected = f.psi.value(running[path.end_index()]);
    let error = (est.value - expected).abs();
    Ok(RecoveredPsi { recovered: est.value, expected, residual: est.residual, error, passed: error <= est.residual + 1e-6 })
}

/// `∫∫ ∂_y g(s, y) d_s L(s, y) dy` with `g(s, y) = ∂⁻𝓕(X_s, y)`, realized as
/// `S = Σ_i Σ_{k ∈ band_i} w_i (g(i, y_{k+1}) - g(i, y_k))`.
///
/// `S` is compared with `Lip(g) · M`, where `Lip(g)` is the largest lattice
/// slope of `g` met and `M = Σ_i w_i |band_i| dy` the total band mass; the
/// condition passes when the ratio is below [`LOCAL_MARTINGALE_TOL`].
pub fn check_local_martingale_condition(f: &dyn Functional, path: &Path, band: &BandConfig) -> Result<VerificationReport> {
    let x = path.values();
    let hist = prefixes(path);
    let field = band.field(x, path, x[0])?;
    let levels = *field.levels();
    let mut stat = 0.0;
    let mut lipschitz = 0.0f64;
    let mut mass = 0.0;
    field.for_each_jump(|i, k, w| {
        if k + 1 >= levels.count {
            return;
        }
        let d = left_slope(f, &hist[i + 1], levels.level(k + 1)) - left_slope(f, &hist[i + 1], levels.level(k));
        stat += w * d;
        lipschitz = lipschitz.max(d.abs() / levels.dy);
        mass += w * levels.dy;
    });
    let normalized = if stat == 0.0 { 0.0 } else { stat / (lipschitz * mass) };
    let mut report = band
        .annotate(VerificationReport::new(format!("local_martingale[{}]", f.name()), stat, vec![]), path)
        .with_metric("normalized", normalized)
        .with_metric("lipschitz", lipschitz)
        .with_metric("band_mass", mass);
    report.passed = Some(normalized.abs() < LOCAL_MARTINGALE_TOL);
    Ok(report)
}
