//! Finite-difference estimators with polynomial extrapolation to zero step.

use serde::Serialize;

use super::{Functional, Side};
use crate::error::{argument, Result};
use crate::paths::{lambda_distance, Path, PrefixStats};
use crate::simulate::NormalStream;

pub const DEFAULT_H0: f64 = 1e-2;
pub const DEFAULT_LEVELS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeEstimate {
    pub value: f64,
    /// Steps actually used, after grid snapping or kink avoidance.
    pub steps: Vec<f64>,
    /// `|E_n - E_{n-1}|` for the last two diagonal extrapolants.
    pub residual: f64,
    pub divergent: bool,
}

impl DerivativeEstimate {
    fn from_samples(steps: Vec<f64>, us: &[f64], quotients: &[f64]) -> Self {
        let (value, residual) = extrapolate(us, quotients);
        let divergent = !(value.is_finite() && residual.is_finite());
        Self { value, steps, residual, divergent }
    }
}

/// `h_k = h0 2^-k`, `k = 0..levels`.
pub fn default_steps(h0: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|k| h0 * 0.5f64.powi(k as i32)).collect()
}

/// Neville extrapolation of the samples `(u_k, d_k)` to `u = 0`. Returns the
/// extrapolant through all points and the distance to the one that omits
/// the last point.
pub fn extrapolate(us: &[f64], ds: &[f64]) -> (f64, f64) {
    assert_eq!(us.len(), ds.len());
    match ds.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (ds[0], 0.0),
        n => {
            // p[i] holds P_{i..i+m}(0) after pass m.
            let mut p = ds.to_vec();
            let mut previous_top = p[0];
            for m in 1..n {
                previous_top = p[0];
                for i in 0..n - m {
                    let (ui, uj) = (us[i], us[i + m]);
                    p[i] = (ui * p[i + 1] - uj * p[i]) / (ui - uj);
                }
            }
            (p[0], (p[0] - previous_top).abs())
        }
    }
}

fn check_steps(steps: &[f64]) -> Result<()> {
    if steps.is_empty() {
        return Err(argument("need at least one step"));
    }
    if steps.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(argument("steps must be positive and finite"));
    }
    if steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(argument("steps must be strictly decreasing"));
    }
    Ok(())
}

/// `Δ_t f(Y_t)` from forward differences along flat extensions. Each `δ` is
/// snapped up to the grid; repeated grid points are dropped.
pub fn time_derivative_est(f: &dyn Functional, path: &Path, deltas: &[f64]) -> Result<DerivativeEstimate> {
    check_steps(deltas)?;
    let base = f.evaluate(path);
    let t = path.end_time();
    let mut used: Vec<(usize, f64)> = Vec::new();
    for &d in deltas {
        let index = path.grid().index_at_or_after(t + d)?;
        let index = index.max(path.end_index() + 1);
        if index > path.grid().steps() {
            return Err(crate::error::domain(format!(
                "flat extension by {d} from {t} leaves the horizon {}",
                path.grid().horizon()
            )));
        }
        if used.last().map_or(true, |&(i, _)| i != index) {
            used.push((index, path.grid().time(index) - t));
        }
    }
    let mut us = Vec::with_capacity(used.len());
    let mut qs = Vec::with_capacity(used.len());
    for &(index, delta) in &used {
        let extended = path.flat_extend_to_index(index)?;
        us.push(delta);
        qs.push((f.evaluate(&extended) - base) / delta);
    }
    Ok(DerivativeEstimate::from_samples(us.clone(), &us, &qs))
}

/// Shrinks the steps so that no bump crosses a declared kink of `f`
/// (a kink sitting exactly at `y` is left alone).
fn kink_safe_steps(f: &dyn Functional, prefix: &PrefixStats, y: f64, side: Side, steps: &[f64]) -> Vec<f64> {
    let floor = 64.0 * f64::EPSILON * y.abs().max(1.0);
    let dist = f
        .kinks(prefix)
        .into_iter()
        .filter_map(|k| {
            let d = match side {
                Side::Left => y - k,
                Side::Right => k - y,
                Side::Central => (k - y).abs(),
            };
            (d > floor).then_some(d)
        })
        .fold(f64::INFINITY, f64::min);
    if steps[0] < dist {
        return steps.to_vec();
    }
    let scale = 0.5 * dist / steps[0];
    steps.iter().map(|h| h * scale).collect()
}

/// One-sided or central derivative of `h ↦ F(Y_t, h)` at `h = 0`.
/// One-sided quotients are extrapolated in `h`, central ones in `h²`.
pub fn space_derivative_est(f: &dyn Functional, path: &Path, side: Side, steps: &[f64]) -> Result<DerivativeEstimate> {
    check_steps(steps)?;
    let prefix = PrefixStats::of(path);
    let y = path.last();
    let steps = kink_safe_steps(f, &prefix, y, side, steps);
    let g = |v: f64| f.replaced(&prefix, v);
    let g0 = g(y);
    let mut us = Vec::with_capacity(steps.len());
    let mut qs = Vec::with_capacity(steps.len());
    for &h in &steps {
        match side {
            Side::Left => {
                let lo = y - h;
                let he = y - lo;
                us.push(he);
                qs.push((g0 - g(lo)) / he);
            }
            Side::Right => {
                let hi = y + h;
                let he = hi - y;
                us.push(he);
                qs.push((g(hi) - g0) / he);
            }
            Side::Central => {
                let (lo, hi) = (y - h, y + h);
                us.push(h * h);
                qs.push((g(hi) - g(lo)) / (hi - lo));
            }
        }
    }
    Ok(DerivativeEstimate::from_samples(steps, &us, &qs))
}

/// `∂_y^- 𝓕(Y_t, y)`: the analytic slope when the functional has one,
/// otherwise extrapolated left differences of `𝓕`.
pub fn left_slope(f: &dyn Functional, prefix: &PrefixStats, y: f64) -> f64 {
    if let Some(s) = f.slope(prefix, y, Side::Left) {
        return s;
    }
    let steps = kink_safe_steps(f, prefix, y, Side::Left, &default_steps(1e-4, 4));
    let g0 = f.replaced(prefix, y);
    let mut us = Vec::with_capacity(steps.len());
    let mut qs = Vec::with_capacity(steps.len());
    for h in steps {
        let lo = y - h;
        let he = y - lo;
        us.push(he);
        qs.push((g0 - f.replaced(prefix, lo)) / he);
    }
    extrapolate(&us, &qs).0
}

/// Central second difference of `h ↦ F(Y_t, h)`, extrapolated in `h²`.
pub fn second_space_derivative_est(f: &dyn Functional, path: &Path, steps: &[f64]) -> Result<DerivativeEstimate> {
    check_steps(steps)?;
    let prefix = PrefixStats::of(path);
    let y = path.last();
    let steps = kink_safe_steps(f, &prefix, y, Side::Central, steps);
    let g = |v: f64| f.replaced(&prefix, v);
    let g0 = g(y);
    let us: Vec<f64> = steps.iter().map(|h| h * h).collect();
    let qs: Vec<f64> = steps.iter().map(|&h| (g(y + h) - 2.0 * g0 + g(y - h)) / (h * h)).collect();
    Ok(DerivativeEstimate::from_samples(steps, &us, &qs))
}

/// Largest `|F(Y, ξ) - F(Z, ξ)|` over sampled `Z` with `d_Λ(Y, Z) < radius`
/// and `ξ ~ U[-3, 3]`.
///
/// Samples are flat extensions by at most `radius / 2` followed by a uniform
/// perturbation of every value. Extensions are only drawn when `Y` ends with
/// a flat step; on a grid, extending a path whose last increment is nonzero
/// moves its final value into the prefix, which the continuous-path bounds do
/// not account for.
pub fn continuity_probe(f: &dyn Functional, path: &Path, radius: f64, samples: usize, seed: u64) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(argument(format!("radius must be > 0, got {radius}")));
    }
    let grid = *path.grid();
    let k = path.end_index();
    let values = path.values();
    let flat_end = k == 0 || values[k] == values[k - 1];
    let max_ext = if flat_end {
        (((0.5 * radius) / grid.dt()).floor() as usize).min(grid.steps() - k)
    } else {
        0
    };
    let prefix_y = PrefixStats::of(path);
    let mut rng = NormalStream::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let m = ((rng.uniform() * (max_ext + 1) as f64) as usize).min(max_ext);
        let delta = grid.time(k + m) - grid.time(k);
        let amp = 0.999 * (radius - delta);
        let mut z = path.flat_extend_to_index(k + m)?.values().to_vec();
        for v in z.iter_mut() {
            *v += amp * (2.0 * rng.uniform() - 1.0);
        }
        let z = Path::new(grid, z)?;
        if lambda_distance(path, &z)? >= radius {
            continue;
        }
        let xi = 6.0 * rng.uniform() - 3.0;
        let fy = f.replaced(&prefix_y, path.last() + xi);
        let fz = f.replaced(&PrefixStats::of(&z), z.last() + xi);
        worst = worst.max((fy - fz).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::*;
    use crate::paths::TimeGrid;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 1000).unwrap()
    }

    fn path(values: &[f64]) -> Path {
        Path::new(grid(), values.to_vec()).unwrap()
    }

    fn steps() -> Vec<f64> {
        default_steps(DEFAULT_H0, DEFAULT_LEVELS)
    }

    #[test]
    fn extrapolation_is_exact_on_polynomials() {
        let us: Vec<f64> = steps();
        let ds: Vec<f64> = us.iter().map(|u| 3.0 - 2.0 * u + 5.0 * u * u).collect();
        let (v, r) = extrapolate(&us, &ds);
        assert!((v - 3.0).abs() < 1e-10);
        assert!(r < 1e-10);
    }

    #[test]
    fn time_derivative_examples() {
        let y = path(&[0.0, 0.4, -0.3, 0.2]);
        let deltas = steps();
        let est = time_derivative_est(&RunningMax, &y, &deltas).unwrap();
        assert_eq!(est.value, 0.0);
        let est = time_derivative_est(&RunningIntegral, &y, &deltas).unwrap();
        assert!((est.value - 0.2).abs() < 1e-9, "{est:?}");
        let est = time_derivative_est(&QuadraticVariation, &y, &deltas).unwrap();
        assert!(est.value.abs() < 1e-9, "{est:?}");
    }

    #[test]
    fn time_derivative_past_horizon_is_a_domain_error() {
        let y = Path::new(grid(), vec![0.0; 1000]).unwrap();
        assert!(matches!(
            time_derivative_est(&RunningMax, &y, &[0.5]),
            Err(crate::error::Error::Domain(_))
        ));
    }

    #[test]
    fn space_derivative_examples() {
        let off = path(&[0.0, 2.0, 1.0]);
        for side in [Side::Left, Side::Right] {
            let e = space_derivative_est(&RunningMax, &off, side, &steps()).unwrap();
            assert!(e.value.abs() < 1e-12);
        }
        let on = path(&[0.0, 1.0, 2.0]);
        let r = space_derivative_est(&RunningMax, &on, Side::Right, &steps()).unwrap();
        let l = space_derivative_est(&RunningMax, &on, Side::Left, &steps()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9 && (l.value - 1.0).abs() < 1e-9);
        // A tie with the prefix maximum is in 𝒮: right 1, left 0.
        let tie = path(&[0.0, 2.0, 2.0]);
        let r = space_derivative_est(&RunningMax, &tie, Side::Right, &steps()).unwrap();
        let l = space_derivative_est(&RunningMax, &tie, Side::Left, &steps()).unwrap();
        let c = space_derivative_est(&RunningMax, &tie, Side::Central, &steps()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9 && l.value.abs() < 1e-9);
        assert!((c.value - 0.5).abs() < 1e-9);
        let sq = PathIndependent::square();
        let e = space_derivative_est(&sq, &path(&[0.0, 3.0]), Side::Central, &steps()).unwrap();
        assert!((e.value - 6.0).abs() < 1e-9);
    }

    #[test]
    fn second_derivative_examples() {
        let y = path(&[0.0, 0.3, 0.1]);
        let qv = second_space_derivative_est(&QuadraticVariation, &y, &steps()).unwrap();
        assert!((qv.value - 2.0).abs() < 1e-6, "{qv:?}");
        let sq = second_space_derivative_est(&PathIndependent::square(), &y, &steps()).unwrap();
        assert!((sq.value - 2.0).abs() < 1e-6);
        let ri = second_space_derivative_est(&RunningIntegral, &y, &steps()).unwrap();
        assert_eq!(ri.value, 0.0);
    }

    #[test]
    fn kink_avoidance_keeps_one_sided_estimates_clean() {
        // Final value 3e-3 below the running max: the default first step
        // would cross the kink.
        let f = MaxMartingale::new(Psi::Identity, 0.0);
        let y = path(&[0.0, 1.0, 0.997]);
        let e = space_derivative_est(&f, &y, Side::Right, &steps()).unwrap();
        assert!(e.steps[0] < 3e-3);
        assert!((e.value - 1.0).abs() < 1e-9, "{e:?}");
    }

    #[test]
    fn continuity_probe_examples() {
        let y = path(&[0.0, 0.5, -0.2, 0.3, 0.3]);
        let r = 0.05;
        assert!(continuity_probe(&RunningMax, &y, r, 500, 1).unwrap() <= r);
        assert!(continuity_probe(&TerminalValue, &y, r, 500, 2).unwrap() <= r);
        assert_eq!(continuity_probe(&PathIndependent::constant(2.0), &y, r, 100, 3).unwrap(), 0.0);
        assert!(continuity_probe(&RunningMax, &y, 0.0, 10, 1).is_err());
    }

    #[test]
    fn numeric_left_slope_fallback() {
        let f = PathIndependent::new("cube", |_, y| y * y * y);
        let p = PrefixStats::of(&path(&[0.0, 0.5]));
        assert!((left_slope(&f, &p, 0.5) - 0.75).abs() < 1e-9);
        assert_eq!(left_slope(&RunningMax, &p, 0.0), 0.0);
    }

    #[test]
    fn step_validation() {
        let y = path(&[0.0, 1.0]);
        assert!(space_derivative_est(&RunningMax, &y, Side::Left, &[]).is_err());
        assert!(space_derivative_est(&RunningMax, &y, Side::Left, &[1e-3, 1e-2]).is_err());
        assert!(space_derivative_est(&RunningMax, &y, Side::Left, &[-1e-3]).is_err());
    }
}
