//! Quadratic variation, left-point Itô sums, ε-band local time and the
//! Stieltjes sums built on it.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::paths::{Path, TimeGrid};

/// Normalization of the band estimator `L ≈ c/ε Σ 1{|x_i - y| ≤ ε} (Δx_i)²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `c = 1/4`, i.e. division by `4ε`.
    Quarter,
    /// `c = 1/2`, i.e. division by `2ε` (semimartingale local time).
    Half,
}

impl Convention {
    pub const BOTH: [Convention; 2] = [Convention::Quarter, Convention::Half];

    pub fn constant(self) -> f64 {
        match self {
            Convention::Quarter => 0.25,
            Convention::Half => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Convention::Quarter => "quarter",
            Convention::Half => "half",
        }
    }
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quarter" | "0.25" | "1/4" => Ok(Convention::Quarter),
            "half" | "0.5" | "1/2" => Ok(Convention::Half),
            other => Err(argument(format!("unknown convention `{other}` (quarter, half)"))),
        }
    }
}

/// Where the band indicator is evaluated on each increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandPoint {
    #[default]
    Left,
    Midpoint,
}

impl std::str::FromStr for BandPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(BandPoint::Left),
            "midpoint" => Ok(BandPoint::Midpoint),
            other => Err(argument(format!("unknown band point `{other}` (left, midpoint)"))),
        }
    }
}

/// `ε = max(0.02, 0.6 N^{-1/4})`.
pub fn default_epsilon(steps: usize) -> f64 {
    0.02f64.max(0.6 * (steps as f64).powf(-0.25))
}

/// `dy = ε / 2`.
pub fn default_dy(epsilon: f64) -> f64 {
    0.5 * epsilon
}

/// Cumulative `q_j = Σ_{i<j} (Δx_i)²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QvProcess {
    pub values: Vec<f64>,
}

impl QvProcess {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("q_0 always present")
    }
}

pub fn qv_process(path: &Path) -> QvProcess {
    let mut q = 0.0;
    let mut values = Vec::with_capacity(path.values().len());
    values.push(0.0);
    for d in path.increments() {
        q += d * d;
        values.push(q);
    }
    QvProcess { values }
}

/// Left-point sum `Σ_j g_j (x_{j+1} - x_j)`; `g` has one entry per increment.
pub fn ito_integral(g: &[f64], path: &Path) -> Result<f64> {
    if g.len() != path.end_index() {
        return Err(argument(format!(
            "integrand has {} values for {} increments",
            g.len(),
            path.end_index()
        )));
    }
    Ok(g.iter().zip(path.increments()).map(|(a, d)| a * d).sum())
}

/// Uniform levels `y_k = anchor + (first + k) dy`, `k = 0..count`. The anchor
/// is itself a level (when inside the range) and is represented exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelGrid {
    pub anchor: f64,
    pub dy: f64,
    pub first: i64,
    pub count: usize,
}

impl LevelGrid {
    pub fn new(anchor: f64, dy: f64, first: i64, count: usize) -> Result<Self> {
        if !(dy.is_finite() && dy > 0.0) {
            return Err(argument(format!("level spacing must be > 0, got {dy}")));
        }
        if count == 0 {
            return Err(argument("empty level grid"));
        }
        if !anchor.is_finite() {
            return Err(argument("level anchor must be finite"));
        }
        Ok(Self { anchor, dy, first, count })
    }

    /// Smallest anchored grid containing `[lo, hi]`.
    pub fn covering(anchor: f64, dy: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(argument("level range is empty"));
        }
        let first = ((lo - anchor) / dy).floor() as i64;
        let last = ((hi - anchor) / dy).ceil() as i64;
        Self::new(anchor, dy, first, (last - first + 1) as usize)
    }

    /// Grid spanning `[min z - 3ε, max z + 3ε]`.
    pub fn for_values(values: &[f64], anchor: f64, dy: f64, epsilon: f64) -> Result<Self> {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        Self::covering(anchor, dy, lo - 3.0 * epsilon, hi + 3.0 * epsilon)
    }

    pub fn level(&self, k: usize) -> f64 {
        self.anchor + (self.first + k as i64) as f64 * self.dy
    }

    pub fn lo(&self) -> f64 {
        self.level(0)
    }

    pub fn hi(&self) -> f64 {
        self.level(self.count - 1)
    }

    /// Index of the level equal to `y` (up to `1e-9 dy`).
    pub fn index_of(&self, y: f64) -> Option<usize> {
        let r = ((y - self.anchor) / self.dy).round() as i64 - self.first;
        if r < 0 || r as usize >= self.count {
            return None;
        }
        let k = r as usize;
        ((self.level(k) - y).abs() <= 1e-9 * self.dy).then_some(k)
    }

    /// Indices `k` with `|z - y_k| ≤ ε`, as an inclusive range.
    pub fn band(&self, z: f64, epsilon: f64) -> Option<(usize, usize)> {
        let inside = |k: i64| k >= 0 && (k as usize) < self.count && (z - self.level(k as usize)).abs() <= epsilon;
        let mut lo = ((z - epsilon - self.anchor) / self.dy).ceil() as i64 - self.first;
        let mut hi = ((z + epsilon - self.anchor) / self.dy).floor() as i64 - self.first;
        lo = lo.max(0);
        hi = hi.min(self.count as i64 - 1);
        while lo > 0 && inside(lo - 1) {
            lo -= 1;
        }
        while hi + 1 < self.count as i64 && inside(hi + 1) {
            hi += 1;
        }
        while lo <= hi && !inside(lo) {
            lo += 1;
        }
        while hi >= lo && !inside(hi) {
            hi -= 1;
        }
        (lo <= hi).then_some((lo as usize, hi as usize))
    }
}

/// One increment's contribution: `weight` is added to `L[j][k]` for every
/// `j > step` and `k` in `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BandEntry {
    step: u32,
    lo: u32,
    hi: u32,
    weight: f64,
}

/// `L[j][k] ≈ L(t_j, y_k)`, stored sparsely as per-increment band hits.
#[derive(Debug, Clone)]
pub struct LocalTimeField {
    time: TimeGrid,
    steps: usize,
    levels: LevelGrid,
    epsilon: f64,
    convention: Convention,
    band_point: BandPoint,
    entries: Vec<BandEntry>,
    final_row: Vec<f64>,
}

/// Local time of the path itself.
pub fn local_time_field(path: &Path, levels: &LevelGrid, epsilon: f64, convention: Convention) -> Result<LocalTimeField> {
    LocalTimeField::build(path.values(), path, levels, epsilon, convention, BandPoint::Left)
}

impl LocalTimeField {
    /// Band counting on the process `band` (one value per grid point of
    /// `driver`) with quadratic-variation increments taken from `driver`.
    pub fn build(
        band: &[f64],
        driver: &Path,
        levels: &LevelGrid,
        epsilon: f64,
        convention: Convention,
        band_point: BandPoint,
    ) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(argument(format!("band half-width must be > 0, got {epsilon}")));
        }
        if band.len() != driver.values().len() {
            return Err(argument("band process and driver have different lengths"));
        }
        let steps = driver.end_index();
        let points: Vec<f64> = match band_point {
            BandPoint::Left => band[..steps].to_vec(),
            BandPoint::Midpoint => band.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
        };
        if let Some((lo, hi)) = points
            .iter()
            .fold(None, |acc: Option<(f64, f64)>, &v| Some(acc.map_or((v, v), |(a, b)| (a.min(v), b.max(v)))))
        {
            if lo - epsilon < levels.lo() - 0.5 * levels.dy || hi + epsilon > levels.hi() + 0.5 * levels.dy {
                return Err(argument(format!(
                    "level grid [{}, {}] does not cover the band range [{}, {}]",
                    levels.lo(),
                    levels.hi(),
                    lo - epsilon,
                    hi + epsilon
                )));
            }
        }
        let scale = convention.constant() / epsilon;
        let mut entries = Vec::new();
        let mut final_row = vec![0.0; levels.count];
        for (i, (z, d)) in points.iter().zip(driver.increments()).enumerate() {
            if let Some((lo, hi)) = levels.band(*z, epsilon) {
                let weight = scale * d * d;
                entries.push(BandEntry { step: i as u32, lo: lo as u32, hi: hi as u32, weight });
                for v in &mut final_row[lo..=hi] {
                    *v += weight;
                }
            }
        }
        Ok(Self {
            time: *driver.grid(),
            steps,
            levels: *levels,
            epsilon,
            convention,
            band_point,
            entries,
            final_row,
        })
    }

    pub fn levels(&self) -> &LevelGrid {
        &self.levels
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn band_point(&self) -> BandPoint {
        self.band_point
    }

    /// Number of increments; rows run over `j = 0..=steps`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn final_row(&self) -> &[f64] {
        &self.final_row
    }

    /// `L[j][·]`.
    pub fn row(&self, j: usize) -> Vec<f64> {
        if j >= self.steps {
            return self.final_row.clone();
        }
        let mut row = vec![0.0; self.levels.count];
        for e in self.entries.iter().take_while(|e| (e.step as usize) < j) {
            for v in &mut row[e.lo as usize..=e.hi as usize] {
                *v += e.weight;
            }
        }
        row
    }

    /// `L[N][k]` at the level equal to `y`.
    pub fn final_at_level(&self, y: f64) -> Result<f64> {
        let k = self
            .levels
            .index_of(y)
            .ok_or_else(|| argument(format!("{y} is not a level of the grid")))?;
        Ok(self.final_row[k])
    }

    /// `2 Σ_k L[j][k] dy`.
    pub fn total_mass(&self, j: usize) -> f64 {
        2.0 * self.row(j).iter().sum::<f64>() * self.levels.dy
    }

    /// Visits every nonzero jump `L[i+1][k] - L[i][k]` as `(i, k, jump)`,
    /// in increasing `i`, then `k`.
    pub fn for_each_jump(&self, mut f: impl FnMut(usize, usize, f64)) {
        for e in &self.entries {
            for k in e.lo..=e.hi {
                f(e.step as usize, k as usize, e.weight);
            }
        }
    }

    /// Dense rows `L[0..=N]`; memory is `(N+1) × levels`.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.steps + 1);
        let mut row = vec![0.0; self.levels.count];
        let mut it = self.entries.iter().peekable();
        for j in 0..=self.steps {
            out.push(row.clone());
            while let Some(e) = it.next_if(|e| e.step as usize == j) {
                for v in &mut row[e.lo as usize..=e.hi as usize] {
                    *v += e.weight;
                }
            }
        }
        out
    }

    /// `t,y,L` rows for every `stride`-th time index and the final time.
    pub fn write_csv<W: Write>(&self, writer: W, stride: usize) -> Result<()> {
        let stride = stride.max(1);
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "y", "L"])?;
        let mut row = vec![0.0; self.levels.count];
        let mut it = self.entries.iter().peekable();
        for j in 0..=self.steps {
            if j % stride == 0 || j == self.steps {
                for (k, v) in row.iter().enumerate() {
                    w.write_record([self.time.time(j).to_string(), self.levels.level(k).to_string(), v.to_string()])?;
                }
            }
            while let Some(e) = it.next_if(|e| e.step as usize == j) {
                for v in &mut row[e.lo as usize..=e.hi as usize] {
                    *v += e.weight;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn require_quarter(field: &LocalTimeField) -> Result<()> {
    if field.convention != Convention::Quarter {
        return Err(Error::Convention(format!(
            "the occupation formula is stated for the quarter convention, field uses {}",
            field.convention.name()
        )));
    }
    Ok(())
}

/// `Σ_j ψ(t_j, x_j) (Δx_j)²`.
pub fn occupation_lhs(psi: impl Fn(f64, f64) -> f64, path: &Path) -> f64 {
    let grid = path.grid();
    path.values()
        .windows(2)
        .enumerate()
        .map(|(j, w)| {
            let d = w[1] - w[0];
            psi(grid.time(j), w[0]) * d * d
        })
        .sum()
}

/// `2 Σ_k dy Σ_j ψ(t_j, y_k) (L[j+1][k] - L[j][k])`; quarter convention only.
pub fn occupation_rhs(psi: impl Fn(f64, f64) -> f64, field: &LocalTimeField) -> Result<f64> {
    require_quarter(field)?;
    let mut total = 0.0;
    field.for_each_jump(|i, k, jump| total += psi(field.time.time(i), field.levels.level(k)) * jump);
    Ok(2.0 * field.levels.dy * total)
}

/// [`occupation_rhs`] with the integrand indexed by time step: `psi(i, y_k)`
/// multiplies the jump `L[i+1][k] - L[i][k]`.
pub fn occupation_rhs_indexed(psi: impl Fn(usize, f64) -> f64, field: &LocalTimeField) -> Result<f64> {
    require_quarter(field)?;
    let mut total = 0.0;
    field.for_each_jump(|i, k, jump| total += psi(i, field.levels.level(k)) * jump);
    Ok(2.0 * field.levels.dy * total)
}

/// `Σ_k L(y_k) (g(y_{k+1}) - g(y_k))`.
pub fn stieltjes_in_y(row: &[f64], g: &[f64]) -> Result<f64> {
    if row.len() != g.len() {
        return Err(argument(format!("row has {} levels, integrator {}", row.len(), g.len())));
    }
    Ok(row.iter().zip(g.windows(2)).map(|(l, w)| l * (w[1] - w[0])).sum())
}

/// `Σ_{j,k} L[j][k] Δ²g(j,k)` over `j = 0..N-1`, `k = 0..K-2`, where
/// `g(j, k)` samples the integrator at `(t_j, y_k)` for `j = 0..=N`.
///
/// Evaluated by summation by parts in `j`: each band hit at step `i` adds
/// `w_i [D_k g(N) - D_k g(i+1)]` with `D_k g(j) = g(j, k+1) - g(j, k)`.
pub fn double_stieltjes(field: &LocalTimeField, g: impl Fn(usize, usize) -> f64) -> f64 {
    let n = field.steps;
    let top = field.levels.count.saturating_sub(1);
    let mut total = 0.0;
    for e in &field.entries {
        let i = e.step as usize;
        for k in e.lo as usize..=(e.hi as usize).min(top.saturating_sub(1)) {
            if k + 1 > top {
                break;
            }
            let d_end = g(n, k + 1) - g(n, k);
            let d_next = g(i + 1, k + 1) - g(i + 1, k);
            total += e.weight * (d_end - d_next);
        }
    }
    total
}
