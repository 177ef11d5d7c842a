//! Discretized path space.
//!
//! A [`Path`] is a càdlàg path on `[0, t_k]` sampled on a uniform
//! [`TimeGrid`] and interpreted as piecewise constant between grid points.
//! Every deformation (flat extension, bump, replacement of the last value,
//! restriction) returns a new path; paths are never mutated in place.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Error, Result};

/// Relative tolerance used when snapping a time to a grid point and when
/// validating the spacing of a path file.
pub const GRID_SNAP_TOL: f64 = 1e-9;

/// Uniform partition `t_i = i * dt` of `[0, T]` with `dt = T / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(argument(format!("horizon must be finite and > 0, got {horizon}")));
        }
        if steps == 0 {
            return Err(argument("a time grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    /// The unit grid `[0, 1]` with `steps` steps.
    pub fn unit(steps: usize) -> Result<Self> {
        Self::new(1.0, steps)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt()
    }

    /// Smallest grid index whose time is `>= s` (extensions round up).
    pub fn index_at_or_after(&self, s: f64) -> Result<usize> {
        self.snap(s, f64::ceil)
    }

    /// Largest grid index whose time is `<= s` (restrictions round down).
    pub fn index_at_or_before(&self, s: f64) -> Result<usize> {
        self.snap(s, f64::floor)
    }

    fn snap(&self, s: f64, round: fn(f64) -> f64) -> Result<usize> {
        if !s.is_finite() || s < -GRID_SNAP_TOL * self.horizon {
            return Err(domain(format!("time {s} is outside [0, {}]", self.horizon)));
        }
        let x = s / self.dt();
        let nearest = x.round();
        let i = if (x - nearest).abs() <= GRID_SNAP_TOL * self.steps as f64 {
            nearest
        } else {
            round(x)
        };
        let i = i.max(0.0) as usize;
        if i > self.steps {
            return Err(domain(format!("time {s} is beyond the horizon {}", self.horizon)));
        }
        Ok(i)
    }
}

/// An element `Y_t` of the path space: grid values `y_{t_0}, ..., y_{t_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    values: Arc<[f64]>,
}

impl Path {
    /// Builds a path ending at index `values.len() - 1`.
    pub fn new(grid: TimeGrid, values: impl Into<Vec<f64>>) -> Result<Self> {
        let values = values.into();
        if values.is_empty() {
            return Err(argument("a path needs at least one value"));
        }
        if values.len() > grid.steps() + 1 {
            return Err(domain(format!(
                "{} values do not fit on a grid with {} steps",
                values.len(),
                grid.steps()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(argument(format!("path value at index {i} is not finite")));
        }
        Ok(Self { grid, values: values.into() })
    }

    /// The constant path `y ≡ value` on `[0, t_k]`.
    pub fn constant(grid: TimeGrid, end_index: usize, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; end_index + 1])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn end_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn end_time(&self) -> f64 {
        self.grid.time(self.end_index())
    }

    /// `y_t`, the value at the end time.
    pub fn last(&self) -> f64 {
        self.values[self.end_index()]
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    /// Flat extension `Y_{t, s-t}`: holds `y_t` from `t` up to `s`
    /// (`s` snapped up to the grid).
    pub fn flat_extend(&self, s: f64) -> Result<Path> {
        if s < self.end_time() - GRID_SNAP_TOL * self.grid.horizon() {
            return Err(argument(format!(
                "cannot flat-extend a path ending at {} back to {s}",
                self.end_time()
            )));
        }
        let index = self.grid.index_at_or_after(s)?;
        self.flat_extend_to_index(index)
    }

    pub fn flat_extend_to_index(&self, index: usize) -> Result<Path> {
        if index < self.end_index() {
            return Err(argument(format!(
                "extension index {index} precedes the end index {}",
                self.end_index()
            )));
        }
        if index > self.grid.steps() {
            return Err(domain(format!("extension index {index} is beyond the horizon")));
        }
        let mut values = self.values.to_vec();
        values.resize(index + 1, self.last());
        Ok(Path { grid: self.grid, values: values.into() })
    }

    /// Bumped path `Y_t^h`: the final value is shifted by `h`.
    pub fn bump(&self, h: f64) -> Path {
        self.replace_last(self.last() + h)
    }

    /// `Y_{t-}^y`: the final value is replaced by `y`.
    pub fn replace_last(&self, y: f64) -> Path {
        let mut values = self.values.to_vec();
        let k = self.end_index();
        values[k] = y;
        Path { grid: self.grid, values: values.into() }
    }

    /// Restriction `Y_s` to `[0, s]` (`s` snapped down to the grid).
    pub fn restrict(&self, s: f64) -> Result<Path> {
        if s > self.end_time() + GRID_SNAP_TOL * self.grid.horizon() {
            return Err(argument(format!(
                "cannot restrict a path ending at {} to the later time {s}",
                self.end_time()
            )));
        }
        let index = self.grid.index_at_or_before(s)?;
        self.restrict_to_index(index)
    }

    pub fn restrict_to_index(&self, index: usize) -> Result<Path> {
        if index > self.end_index() {
            return Err(argument(format!(
                "restriction index {index} exceeds the end index {}",
                self.end_index()
            )));
        }
        Ok(Path { grid: self.grid, values: self.values[..=index].into() })
    }

    /// The reflected path `-Y`.
    pub fn negate(&self) -> Path {
        Path {
            grid: self.grid,
            values: self.values.iter().map(|v| -v).collect::<Vec<_>>().into(),
        }
    }

    /// Pointwise difference `Y - A` of two paths with the same grid and end time.
    pub fn minus(&self, other: &Path) -> Result<Path> {
        if self.grid != other.grid || self.values.len() != other.values.len() {
            return Err(argument("paths must share grid and end time to be subtracted"));
        }
        let values: Vec<f64> = self.values.iter().zip(other.values.iter()).map(|(a, b)| a - b).collect();
        Ok(Path { grid: self.grid, values: values.into() })
    }

    /// Running maximum `m̄(Y_s)` for every prefix `s <= t`.
    pub fn running_max_trace(&self) -> Vec<f64> {
        scan(&self.values, f64::max)
    }

    /// Running minimum `m̲(Y_s)` for every prefix `s <= t`.
    pub fn running_min_trace(&self) -> Vec<f64> {
        scan(&self.values, f64::min)
    }

    /// The path `a_s = m̄(Y_{s-})`: maximum over the strict prefix `[0, s)`,
    /// with `a_0 = y_0`. This is the grid realization of the left-continuous
    /// running maximum.
    pub fn left_running_max(&self) -> Path {
        self.left_scan(f64::max)
    }

    /// The path `a_s = m̲(Y_{s-})`, the mirror of [`Path::left_running_max`].
    pub fn left_running_min(&self) -> Path {
        self.left_scan(f64::min)
    }

    fn left_scan(&self, op: fn(f64, f64) -> f64) -> Path {
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = self.values[0];
        for (i, &v) in self.values.iter().enumerate() {
            out.push(acc);
            if i == 0 {
                acc = v;
            } else {
                acc = op(acc, v);
            }
        }
        Path { grid: self.grid, values: out.into() }
    }

    /// Increments `y_{i+1} - y_i`.
    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([self.grid.time(i).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `t,value` format. The horizon of the returned grid is the
    /// last time in the file; times must start at 0 and be uniformly spaced.
    pub fn read_csv<R: Read>(reader: R) -> Result<Path> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
            return Err(Error::Format(format!("expected header `t,value`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let parse = |field: &str| -> Result<f64> {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: {e}", line + 1)))
            };
            times.push(parse(&record[0])?);
            values.push(parse(&record[1])?);
        }
        if times.len() < 2 {
            return Err(Error::Format("a path file needs at least two rows".into()));
        }
        let dt = times[1] - times[0];
        if times[0].abs() > GRID_SNAP_TOL || !(dt > 0.0) {
            return Err(Error::Format("times must start at 0 and increase".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            let expected = i as f64 * dt;
            if (t - expected).abs() > GRID_SNAP_TOL * expected.abs().max(dt) {
                return Err(Error::Format(format!("row {}: time {t} breaks uniform spacing {dt}", i + 1)));
            }
        }
        let steps = times.len() - 1;
        let grid = TimeGrid::new(dt * steps as f64, steps)?;
        Path::new(grid, values)
    }
}

fn scan(values: &[f64], op: fn(f64, f64) -> f64) -> Vec<f64> {
    let mut acc = values[0];
    values
        .iter()
        .map(|&v| {
            acc = op(acc, v);
            acc
        })
        .collect()
}

/// `d_Λ(Y_t, Z_s) = ||Y_{t,s-t} - Z_s||_∞ + |s - t|`, with the shorter path
/// flat-extended to the end time of the longer one.
pub fn lambda_distance(y: &Path, z: &Path) -> Result<f64> {
    if y.grid != z.grid {
        return Err(argument("paths live on different time grids"));
    }
    let (short, long) = if y.end_index() <= z.end_index() { (y, z) } else { (z, y) };
    let hold = short.last();
    let sup = long
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let u = if i <= short.end_index() { short.values[i] } else { hold };
            (u - v).abs()
        })
        .fold(0.0, f64::max);
    Ok(sup + (long.end_time() - short.end_time()).abs())
}

/// Summary of the strict prefix `[0, t)` of a path ending at index `k`.
///
/// Every built-in functional depends on the path only through these running
/// statistics and the final value, so `𝓕(Y_t, y) = f(Y_{t-}^y)` can be
/// evaluated in O(1) once the prefix is known. Verification sweeps advance a
/// single `PrefixStats` along the path instead of re-scanning each prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefixStats {
    index: usize,
    dt: f64,
    prev: Option<f64>,
    max: f64,
    min: f64,
    integral: f64,
    qv: f64,
}

impl PrefixStats {
    /// Prefix of a path that consists of its initial point only.
    pub fn start(grid: &TimeGrid) -> Self {
        Self {
            index: 0,
            dt: grid.dt(),
            prev: None,
            max: f64::NEG_INFINITY,
            min: f64::INFINITY,
            integral: 0.0,
            qv: 0.0,
        }
    }

    pub fn of(path: &Path) -> Self {
        let mut stats = Self::start(path.grid());
        for &v in &path.values()[..path.end_index()] {
            stats.advance(v);
        }
        stats
    }

    /// Moves the end of the path one grid step forward; `y` becomes the last
    /// value of the strict prefix.
    pub fn advance(&mut self, y: f64) {
        if let Some(p) = self.prev {
            let d = y - p;
            self.qv += d * d;
        }
        self.max = self.max.max(y);
        self.min = self.min.min(y);
        self.integral += y * self.dt;
        self.prev = Some(y);
        self.index += 1;
    }

    pub fn advanced(mut self, y: f64) -> Self {
        self.advance(y);
        self
    }

    /// End index `k` of the path this prefix belongs to.
    pub fn index(&self) -> usize {
        self.index
    }

    /// End time `t_k`.
    pub fn time(&self) -> f64 {
        self.index as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `y_{t-}`, the value just before the end (None on a one-point path).
    pub fn prev(&self) -> Option<f64> {
        self.prev
    }

    /// `m̄(Y_{t-})`; `-inf` on a one-point path.
    pub fn max(&self) -> f64 {
        self.max
    }

    /// `m̲(Y_{t-})`; `+inf` on a one-point path.
    pub fn min(&self) -> f64 {
        self.min
    }

    /// `∫_0^t y_u du` of the piecewise-constant path (the final value does
    /// not contribute).
    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Sum of squared increments inside the strict prefix.
    pub fn qv(&self) -> f64 {
        self.qv
    }
}
