//! Smooth bump mollifier and quadrature convolution of functionals in the
//! bump variable.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{argument, Error, Result};
use crate::functionals::{Functional, Side};
use crate::paths::{Path, PrefixStats};

/// `1 / ∫_{-1}^{1} exp(-1/(1-x²)) dx`, evaluated once in 40-digit arithmetic.
pub const MOLLIFIER_C: f64 = 2.252_283_621_043_581;

pub const DEFAULT_NODES: usize = 64;

/// Equal panels of the kernel support. The kernel derivatives vary sharply
/// near `±1`; one 64-point panel integrates `ρ''` only to about `1e-6`.
pub const SUBPANELS: usize = 8;

/// `ρ(x) = C exp(-1/(1-x²))` on `(-1, 1)`, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mollifier {
    pub c: f64,
    pub support: (f64, f64),
}

impl Default for Mollifier {
    fn default() -> Self {
        Self { c: MOLLIFIER_C, support: (-1.0, 1.0) }
    }
}

impl Mollifier {
    /// `ρ^{(k)}(x)` for `k ≤ 2`.
    pub fn eval(&self, k: usize, x: f64) -> Result<f64> {
        if k > 2 {
            return Err(Error::Unsupported(format!("mollifier derivative of order {k}")));
        }
        if x <= -1.0 || x >= 1.0 {
            return Ok(0.0);
        }
        let q = 1.0 - x * x;
        let rho = self.c * (-1.0 / q).exp();
        Ok(match k {
            0 => rho,
            1 => rho * (-2.0 * x / (q * q)),
            _ => {
                let q2 = q * q;
                rho * (4.0 * x * x / (q2 * q2) - 2.0 / q2 - 8.0 * x * x / (q2 * q))
            }
        })
    }

    /// `ρ_n^{(k)}(x) = n^{k+1} ρ^{(k)}(n x)`.
    pub fn eval_scaled(&self, n: usize, k: usize, x: f64) -> Result<f64> {
        let n = n as f64;
        Ok(n.powi(k as i32 + 1) * self.eval(k, n * x)?)
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `P_m` from Chebyshev-like initial guesses.
    pub fn new(m: usize) -> Self {
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        let mf = m as f64;
        for i in 0..m.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(m, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if m == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=m {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `F_n(Y_t, h) = ∫ ρ_n(h - ξ) F(Y_t, ξ) dξ`, realized in the final-value
/// variable as `𝓕_n(Y_t, y) = ∫ ρ(u) 𝓕(Y_t, y - u/n) du`.
///
/// The support `u ∈ (-1, 1)` is cut into [`SUBPANELS`] equal panels and
/// further at the kinks of the base functional; each panel gets its own
/// `M`-point Gauss–Legendre rule.
#[derive(Debug, Clone)]
pub struct MollifiedFunctional {
    base: Arc<dyn Functional>,
    n: usize,
    rule: Arc<GaussLegendre>,
    kernel: Mollifier,
}

pub fn mollify(f: Arc<dyn Functional>, n: usize, m: usize) -> Result<MollifiedFunctional> {
    if n == 0 {
        return Err(argument("mollifier index n must be >= 1"));
    }
    if m < 8 {
        return Err(argument(format!("need at least 8 quadrature nodes, got {m}")));
    }
    Ok(MollifiedFunctional {
        base: f,
        n,
        rule: Arc::new(GaussLegendre::new(m)),
        kernel: Mollifier::default(),
    })
}

impl MollifiedFunctional {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> usize {
        self.rule.nodes.len()
    }

    pub fn base(&self) -> &Arc<dyn Functional> {
        &self.base
    }

    fn panels(&self, prefix: &PrefixStats, y: f64) -> Vec<f64> {
        let n = self.n as f64;
        let mut cuts: Vec<f64> = (0..=SUBPANELS).map(|i| -1.0 + 2.0 * i as f64 / SUBPANELS as f64).collect();
        cuts.extend(
            self.base
                .kinks(prefix)
                .into_iter()
                .map(|k| n * (y - k))
                .filter(|u| u.abs() < 1.0),
        );
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts
    }

    /// `n^k ∫ ρ^{(k)}(u) g(y - u/n) du`, divided by the discrete moment
    /// `∫ ρ^{(k)}(u) (-u)^k / k! du` (exactly 1 in the continuum) so that the
    /// rule differentiates polynomials of degree `k` exactly.
    fn convolve(&self, prefix: &PrefixStats, y: f64, k: usize, g: impl Fn(f64) -> f64) -> f64 {
        let n = self.n as f64;
        let cuts = self.panels(prefix, y);
        let moment = |u: f64| match k {
            0 => 1.0,
            1 => -u,
            _ => 0.5 * u * u,
        };
        let mut total = 0.0;
        let mut mass = 0.0;
        for w in cuts.windows(2) {
            total += self.rule.integrate(w[0], w[1], |u| {
                self.kernel.eval(k, u).expect("order checked") * g(y - u / n)
            });
            mass += self.rule.integrate(w[0], w[1], |u| self.kernel.eval(k, u).expect("order checked") * moment(u));
        }
        total / mass * n.powi(k as i32)
    }

    /// `∂_y^k 𝓕_n(Y_t, y)` by differentiating the kernel.
    pub fn replaced_deriv(&self, prefix: &PrefixStats, y: f64, k: usize) -> Result<f64> {
        if k > 2 {
            return Err(Error::Unsupported(format!("mollified derivative of order {k}")));
        }
        Ok(self.convolve(prefix, y, k, |v| self.base.replaced(prefix, v)))
    }
}

impl Functional for MollifiedFunctional {
    fn name(&self) -> String {
        format!("mollified({},{})", self.base.name(), self.n)
    }

    fn replaced(&self, prefix: &PrefixStats, y: f64) -> f64 {
        self.convolve(prefix, y, 0, |v| self.base.replaced(prefix, v))
    }

    fn is_convex(&self) -> bool {
        self.base.is_convex()
    }

    fn is_concave(&self) -> bool {
        self.base.is_concave()
    }

    /// `(Δ_t F)_n`, available when the base has an analytic time derivative.
    fn time_derivative(&self, prefix: &PrefixStats, y: f64) -> Option<f64> {
        self.base.time_derivative(prefix, y)?;
        Some(self.convolve(prefix, y, 0, |v| {
            self.base.time_derivative(prefix, v).unwrap_or(f64::NAN)
        }))
    }

    fn slope(&self, prefix: &PrefixStats, y: f64, _: Side) -> Option<f64> {
        Some(self.convolve(prefix, y, 1, |v| self.base.replaced(prefix, v)))
    }

    fn curvature(&self, prefix: &PrefixStats, y: f64) -> Option<f64> {
        Some(self.convolve(prefix, y, 2, |v| self.base.replaced(prefix, v)))
    }
}

/// `∂_h^k F_n(Y_t, h)`.
pub fn mollified_deriv(fnn: &MollifiedFunctional, k: usize, path: &Path, h: f64) -> Result<f64> {
    fnn.replaced_deriv(&PrefixStats::of(path), path.last() + h, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub f_n: f64,
    pub dx_f_n: f64,
    pub gap_to_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Constant,
    Nondecreasing,
    Nonincreasing,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub functional: String,
    pub f: f64,
    pub left_derivative: f64,
    pub right_derivative: f64,
    pub rows: Vec<ConvergenceRow>,
    /// `|f_n - f|` is nonincreasing and decays at least like `1/n`.
    pub converges: bool,
    pub direction: Monotonicity,
    pub passed: bool,
}

/// Tolerance for monotonicity comparisons between successive `n`.
pub const MONOTONE_TOL: f64 = 1e-8;

impl ConvergenceReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "f_n", "dx_f_n", "gap_to_f"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.f_n.to_string(),
                r.dx_f_n.to_string(),
                r.gap_to_f.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Table of `f_n(Y)`, `Δ_x f_n(Y)` over `n_list`.
///
/// `Δ_x f_n` approaches the average of the one-sided derivatives of `f`
/// (the kernel is symmetric), monotonically from one side; the report
/// records which direction was observed and fails only if neither holds.
pub fn convergence_report(f: Arc<dyn Functional>, path: &Path, n_list: &[usize], m: usize) -> Result<ConvergenceReport> {
    if !(f.is_convex() || f.is_concave()) {
        return Err(Error::Unsupported(format!("{} is neither convex nor concave", f.name())));
    }
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(argument("n_list must be nonempty and strictly increasing"));
    }
    let prefix = PrefixStats::of(path);
    let y = path.last();
    let value = f.replaced(&prefix, y);
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let fnn = mollify(f.clone(), n, m)?;
        let f_n = fnn.replaced_deriv(&prefix, y, 0)?;
        let dx = fnn.replaced_deriv(&prefix, y, 1)?;
        rows.push(ConvergenceRow { n, f_n, dx_f_n: dx, gap_to_f: f_n - value });
    }
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap_to_f.abs()).collect();
    let shrinking = gaps.windows(2).all(|w| w[1] <= w[0] + MONOTONE_TOL);
    let first = &rows[0];
    let last = rows.last().expect("nonempty");
    let rate_bound = gaps[0] * first.n as f64 / last.n as f64 + MONOTONE_TOL;
    let converges = shrinking && gaps[gaps.len() - 1] <= rate_bound;
    let dx: Vec<f64> = rows.iter().map(|r| r.dx_f_n).collect();
    let up = dx.windows(2).all(|w| w[1] >= w[0] - MONOTONE_TOL);
    let down = dx.windows(2).all(|w| w[1] <= w[0] + MONOTONE_TOL);
    let direction = match (up, down) {
        (true, true) => Monotonicity::Constant,
        (true, false) => Monotonicity::Nondecreasing,
        (false, true) => Monotonicity::Nonincreasing,
        (false, false) => Monotonicity::Neither,
    };
    let left = f.slope(&prefix, y, Side::Left).unwrap_or(f64::NAN);
    let right = f.slope(&prefix, y, Side::Right).unwrap_or(f64::NAN);
    Ok(ConvergenceReport {
        functional: f.name(),
        f: value,
        left_derivative: left,
        right_derivative: right,
        rows,
        converges,
        direction,
        passed: converges && direction != Monotonicity::Neither,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::*;
    use crate::paths::TimeGrid;

    fn path(values: &[f64]) -> Path {
        Path::new(TimeGrid::new(1.0, 100).unwrap(), values.to_vec()).unwrap()
    }

    #[test]
    fn kernel_values() {
        let m = Mollifier::default();
        assert_eq!(m.eval(0, 1.0).unwrap(), 0.0);
        assert_eq!(m.eval(0, -1.0).unwrap(), 0.0);
        assert!((m.eval(0, 0.0).unwrap() - MOLLIFIER_C * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(m.eval(1, 0.0).unwrap(), 0.0);
        assert!(matches!(m.eval(3, 0.0), Err(Error::Unsupported(_))));
        assert_eq!(m.eval(0, 0.3).unwrap(), m.eval(0, -0.3).unwrap());
        assert!(m.support.0 < 0.0 && m.support.1 > 0.0);
    }

    #[test]
    fn kernel_normalization_by_trapezoid() {
        // Every derivative of ρ vanishes at ±1, so the trapezoid rule is
        // spectrally accurate here and independent of the Gauss rule.
        let m = Mollifier::default();
        let k = 20_000;
        let h = 2.0 / k as f64;
        let s: f64 = (1..k).map(|i| m.eval(0, -1.0 + i as f64 * h).unwrap()).sum::<f64>() * h;
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn kernel_derivatives_match_differences() {
        let m = Mollifier::default();
        let h = 1e-5;
        for &x in &[-0.9, -0.5, -0.1, 0.2, 0.6, 0.85] {
            for k in 0..2 {
                let fd = (m.eval(k, x + h).unwrap() - m.eval(k, x - h).unwrap()) / (2.0 * h);
                let exact = m.eval(k + 1, x).unwrap();
                assert!((fd - exact).abs() < 1e-6 * exact.abs().max(1.0), "k={k} x={x}");
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let gl = GaussLegendre::new(8);
        // Degree 15 is the exactness limit for 8 nodes.
        let v = gl.integrate(-1.0, 1.0, |x| x.powi(14) + x.powi(15));
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
        let w: f64 = GaussLegendre::new(64).weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-13);
    }

    #[test]
    fn linear_functional_is_reproduced() {
        let y = path(&[0.0, 0.7, 0.2]);
        let f = mollify(Arc::new(TerminalValue), 4, 64).unwrap();
        for &h in &[0.0, 0.3, -1.1] {
            assert!((mollified_deriv(&f, 0, &y, h).unwrap() - (0.2 + h)).abs() < 1e-14);
            let d = mollified_deriv(&f, 1, &y, h).unwrap();
            assert!((d - 1.0).abs() < 1e-10, "{d}");
        }
        assert!(mollify(Arc::new(TerminalValue), 0, 64).is_err());
        assert!(mollify(Arc::new(TerminalValue), 2, 4).is_err());
    }

    #[test]
    fn running_max_far_below_the_maximum_has_flat_mollification() {
        let y = path(&[0.0, 1.0, 0.5]);
        let f = mollify(Arc::new(RunningMax), 4, 64).unwrap();
        assert!(mollified_deriv(&f, 1, &y, 0.0).unwrap().abs() < 1e-14);
        assert!((mollified_deriv(&f, 0, &y, 0.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn abs_at_the_kink_matches_brute_force_convolution() {
        let y = path(&[0.0, 0.25]);
        let base: Arc<dyn Functional> = Arc::new(AbsTerminalMinus::new(0.25));
        let n = 8;
        let f = mollify(base, n, 64).unwrap();
        let m = Mollifier::default();
        // Midpoint rule over the support as an independent oracle.
        let k = 200_000;
        let du = 2.0 / k as f64;
        let mut v0 = 0.0;
        let mut v1 = 0.0;
        for i in 0..k {
            let u = -1.0 + (i as f64 + 0.5) * du;
            let arg = (0.25 - u / n as f64 - 0.25f64).abs();
            v0 += m.eval(0, u).unwrap() * arg * du;
            v1 += n as f64 * m.eval(1, u).unwrap() * arg * du;
        }
        assert!((mollified_deriv(&f, 0, &y, 0.0).unwrap() - v0).abs() < 1e-9);
        assert!((mollified_deriv(&f, 1, &y, 0.0).unwrap() - v1).abs() < 1e-7);
        assert!(mollified_deriv(&f, 1, &y, 0.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn convergence_table_csv() {
        let y = path(&[0.0, 1.0, 1.0]);
        let rep = convergence_report(Arc::new(RunningMax), &y, &[2, 4, 8, 16], 64).unwrap();
        assert!(rep.passed, "{rep:?}");
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,f_n,dx_f_n,gap_to_f\n"));
        assert_eq!(text.lines().count(), 5);
        assert!(convergence_report(Arc::new(MaxMartingale::new(Psi::Square, 0.0)), &y, &[2], 64).is_err());
    }
}
