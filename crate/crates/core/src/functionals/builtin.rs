use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Functional, Side};
use crate::error::{argument, Result};
use crate::paths::PrefixStats;

/// `m̄(Y_t) = sup_{s ≤ t} y_s`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMax;

impl Functional for RunningMax {
    fn name(&self) -> String {
        "running_max".into()
    }

    fn replaced(&self, prefix: &PrefixStats, y: f64) -> f64 {
        prefix.max().max(y)
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn time_derivative(&self, _: &PrefixStats, _: f64) -> Option<f64> {
        Some(0.0)
    }

    // A tie y == max counts as membership of 𝒮: the right slope is 1 there.
    fn slope(&self, prefix: &PrefixStats, y: f64, side: Side) -> Option<f64> {
        let m = prefix.max();
        let left = if y > m { 1.0 } else { 0.0 };
        let right = if y >= m { 1.0 } else { 0.0 };
        Some(match side {
            Side::Left => left,
            Side::Right => right,
            Side::Central => 0.5 * (left + right),
        })
    }

    fn curvature(&self, prefix: &PrefixStats, y: f64) -> Option<f64> {
        (y != prefix.max()).then_some(0.0)
    }

    fn kinks(&self, prefix: &PrefixStats) -> Vec<f64> {
        finite(prefix.max())
    }
}

/// `m̲(Y_t) = inf_{s ≤ t} y_s`. Concave in the final value.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMin;

impl Functional for RunningMin {
    fn name(&self) -> String {
        "running_min".into()
    }

    fn replaced(&self, prefix: &PrefixStats, y: f64) -> f64 {
        prefix.min().min(y)
    }

    fn is_concave(&self) -> bool {
        true
    }

    fn time_derivative(&self, _: &PrefixStats, _: f64) -> Option<f64> {
        Some(0.0)
    }

    fn slope(&self, prefix: &PrefixStats, y: f64, side: Side) -> Option<f64> {
        let m = prefix.min();
        let left = if y <= m { 1.0 } else { 0.0 };
        let right = if y < m { 1.0 } else { 0.0 };
        Some(match side {
            Side::Left => left,
            Side::Right => right,
            Side::Central => 0.5 * (left + right),
        })
    }

    fn curvature(&self, prefix: &PrefixStats, y: f64) -> Option<f64> {
        (y != prefix.min()).then_some(0.0)
    }

    fn kinks(&self, prefix: &PrefixStats) -> Vec<f64> {
        finite(prefix.min())
    }
}

/// `∫_0^t y_u du` of the piecewise-constant path.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningIntegral;

impl Functional for RunningIntegral {
    fn name(&self) -> String {
        "running_integral".into()
    }

    fn replaced(&self, prefix: &PrefixStats, _y: f64) -> f64 {
        prefix.integral()
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn is_concave(&self) -> bool {
        true
    }

    fn time_derivative(&self, _: &PrefixStats, y: f64) -> Option<f64> {
        Some(y)
    }

    fn slope(&self, _: &PrefixStats, _: f64, _: Side) -> Option<f64> {
        Some(0.0)
    }

    fn curvature(&self, _: &PrefixStats, _: f64) -> Option<f64> {
        Some(0.0)
    }
}

/// Sum of squared increments, `QV(Y_{t-}^y) = QV(Y_{t-}) + (y - y_{t-})²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticVariation;

impl Functional for QuadraticVariation {
    fn name(&self) -> String {
        "quadratic_variation".into()
    }

    fn replaced(&self, prefix: &PrefixStats, y: f64) -> f64 {
        match prefix.prev() {
            Some(p) => prefix.qv() + (y - p) * (y - p),
            None => 0.0,
        }
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn time_derivative(&self, _: &PrefixStats, _: f64) -> Option<f64> {
        Some(0.0)
    }

    fn slope(&self, prefix: &PrefixStats, y: f64, _: Side) -> Option<f64> {
        Some(prefix.prev().map_or(0.0, |p| 2.0 * (y - p)))
    }

    fn curvature(&self, prefix: &PrefixStats, _: f64) -> Option<f64> {
        Some(if prefix.prev().is_some() { 2.0 } else { 0.0 })
    }
}

/// `f(Y_t) = y_t`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TerminalValue;

impl Functional for TerminalValue {
    fn name(&self) -> String {
        "terminal_value".into()
    }

    fn replaced(&self, _: &PrefixStats, y: f64) -> f64 {
        y
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn is_concave(&self) -> bool {
        true
    }

    fn time_derivative(&self, _: &PrefixStats, _: f64) -> Option<f64> {
        Some(0.0)
    }

    fn slope(&self, _: &PrefixStats, _: f64, _: Side) -> Option<f64> {
        Some(1.0)
    }

    fn curvature(&self, _: &PrefixStats, _: f64) -> Option<f64> {
        Some(0.0)
    }
}

/// `f(Y_t) = |y_t - K|`.
#[derive(Debug, Clone, Copy)]
pub struct AbsTerminalMinus {
    pub k: f64,
}

impl AbsTerminalMinus {
    pub fn new(k: f64) -> Self {
        Self { k }
    }

    /// Left derivative of `|· - K|`: -1 on `(-∞, K]`, +1 on `(K, ∞)`.
    pub fn sgn_left(&self, y: f64) -> f64 {
        if y <= self.k {
            -1.0
        } else {
            1.0
        }
    }
}

impl Functional for AbsTerminalMinus {
    fn name(&self) -> String {
        format!("abs_terminal_minus({})", self.k)
    }

    fn replaced(&self, _: &PrefixStats, y: f64) -> f64 {
        (y - self.k).abs()
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn time_derivative(&self, _: &PrefixStats, _: f64) -> Option<f64> {
        Some(0.0)
    }

    fn slope(&self, _: &PrefixStats, y: f64, side: Side) -> Option<f64> {
        let left = self.sgn_left(y);
        let right = if y < self.k { -1.0 } else { 1.0 };
        Some(match side {
            Side::Left => left,
            Side::Right => right,
            Side::Central => 0.5 * (left + right),
        })
    }

    fn curvature(&self, _: &PrefixStats, y: f64) -> Option<f64> {
        (y != self.k).then_some(0.0)
    }

    fn kinks(&self, _: &PrefixStats) -> Vec<f64> {
        vec![self.k]
    }
}

type Field = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `f(Y_t) = h(t, y_t)` with optional partial derivatives.
#[derive(Clone)]
pub struct PathIndependent {
    name: String,
    h: Field,
    h_t: Option<Field>,
    h_y: Option<Field>,
    h_yy: Option<Field>,
    convex: bool,
}

impl PathIndependent {
    pub fn new(name: impl Into<String>, h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            h: Arc::new(h),
            h_t: None,
            h_y: None,
            h_yy: None,
            convex: false,
        }
    }

    pub fn with_derivatives(
        mut self,
        h_t: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        h_y: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        h_yy: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.h_t = Some(Arc::new(h_t));
        self.h_y = Some(Arc::new(h_y));
        self.h_yy = Some(Arc::new(h_yy));
        self
    }

    pub fn convex(mut self, convex: bool) -> Self {
        self.convex = convex;
        self
    }

    /// `h(t, y) = y²`.
    pub fn square() -> Self {
        Self::new("square", |_, y| y * y)
            .with_derivatives(|_, _| 0.0, |_, y| 2.0 * y, |_, _| 2.0)
            .convex(true)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), move |_, _| c)
            .with_derivatives(|_, _| 0.0, |_, _| 0.0, |_, _| 0.0)
            .convex(true)
    }
}

impl fmt::Debug for PathIndependent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathIndependent")
            .field("name", &self.name)
            .field("analytic", &self.h_y.is_some())
            .field("convex", &self.convex)
            .finish()
    }
}

impl Functional for PathIndependent {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn replaced(&self, prefix: &PrefixStats, y: f64) -> f64 {
        (self.h)(prefix.time(), y)
    }

    fn is_convex(&self) -> bool {
        self.convex
    }

    fn time_derivative(&self, prefix: &PrefixStats, y: f64) -> Option<f64> {
        self.h_t.as_ref().map(|g| g(prefix.time(), y))
    }

    fn slope(&self, prefix: &PrefixStats, y: f64, _: Side) -> Option<f64> {
        self.h_y.as_ref().map(|g| g(prefix.time(), y))
    }

    fn curvature(&self, prefix: &PrefixStats, y: f64) -> Option<f64> {
        self.h_yy.as_ref().map(|g| g(prefix.time(), y))
    }
}

/// Catalogue of `ψ` for max-martingales; each has a closed-form
/// `Ψ(x) = ∫_0^x ψ(s) ds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psi {
    One,
    Identity,
    Square,
    ExpNeg,
}

impl Psi {
    pub const ALL: [Psi; 4] = [Psi::One, Psi::Identity, Psi::Square, Psi::ExpNeg];

    pub fn name(self) -> &'static str {
        match self {
            Psi::One => "one",
            Psi::Identity => "identity",
            Psi::Square => "square",
            Psi::ExpNeg => "exp_neg",
        }
    }

    pub fn value(self, s: f64) -> f64 {
        match self {
            Psi::One => 1.0,
            Psi::Identity => s,
            Psi::Square => s * s,
            Psi::ExpNeg => (-s).exp(),
        }
    }

    pub fn derivative(self, s: f64) -> f64 {
        match self {
            Psi::One => 0.0,
            Psi::Identity => 1.0,
            Psi::Square => 2.0 * s,
            Psi::ExpNeg => -(-s).exp(),
        }
    }

    pub fn primitive(self, s: f64) -> f64 {
        match self {
            Psi::One => s,
            Psi::Identity => 0.5 * s * s,
            Psi::Square => s * s * s / 3.0,
            Psi::ExpNeg => -(-s).exp_m1(),
        }
    }
}

impl std::str::FromStr for Psi {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" | "1" => Ok(Psi::One),
            "identity" | "s" => Ok(Psi::Identity),
            "square" | "s2" => Ok(Psi::Square),
            "exp_neg" | "exp(-s)" => Ok(Psi::ExpNeg),
            other => Err(argument(format!("unknown psi `{other}` (one, identity, square, exp_neg)"))),
        }
    }
}

/// `f(Y_t) = H(y_t, m̄(Y_t))` with
/// `H(x1, x2) = Ψ(x2) - ψ(x2)(x2 - x1) + H0`.
#[derive(Debug, Clone, Copy)]
pub struct MaxMartingale {
    pub psi: Psi,
    pub h0: f64,
}

impl MaxMartingale {
    pub fn new(psi: Psi, h0: f64) -> Self {
        Self { psi, h0 }
    }

    pub fn h(&self, x1: f64, x2: f64) -> f64 {
        self.psi.primitive(x2) - self.psi.value(x2) * (x2 - x1) + self.h0
    }
}

impl Functional for MaxMartingale {
    fn name(&self) -> String {
        format!("max_martingale({},{})", self.psi.name(), self.h0)
    }

    fn replaced(&self, prefix: &PrefixStats, y: f64) -> f64 {
        self.h(y, prefix.max().max(y))
    }

    fn is_convex(&self) -> bool {
        matches!(self.psi, Psi::One | Psi::Identity)
    }

    fn is_concave(&self) -> bool {
        matches!(self.psi, Psi::One | Psi::ExpNeg)
    }

    fn time_derivative(&self, _: &PrefixStats, _: f64) -> Option<f64> {
        Some(0.0)
    }

    // Below the running max only x1 moves (slope ψ(m)); above it both
    // arguments move and the x2 terms cancel, leaving ψ(y). Continuous at m.
    fn slope(&self, prefix: &PrefixStats, y: f64, _: Side) -> Option<f64> {
        Some(self.psi.value(prefix.max().max(y)))
    }

    fn curvature(&self, prefix: &PrefixStats, y: f64) -> Option<f64> {
        let m = prefix.max();
        if y < m {
            Some(0.0)
        } else if y > m || self.psi == Psi::One {
            Some(self.psi.derivative(y))
        } else {
            None
        }
    }

    fn kinks(&self, prefix: &PrefixStats) -> Vec<f64> {
        finite(prefix.max())
    }
}

fn finite(x: f64) -> Vec<f64> {
    if x.is_finite() {
        vec![x]
    } else {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{Path, TimeGrid};

    fn prefix(values: &[f64]) -> PrefixStats {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let mut v = values.to_vec();
        v.push(0.0);
        PrefixStats::of(&Path::new(grid, v).unwrap())
    }

    #[test]
    fn running_max_slopes_on_and_off_the_maximum() {
        let p = prefix(&[0.0, 2.0]);
        assert_eq!(RunningMax.slope(&p, 1.0, Side::Left), Some(0.0));
        assert_eq!(RunningMax.slope(&p, 1.0, Side::Right), Some(0.0));
        assert_eq!(RunningMax.slope(&p, 2.0, Side::Left), Some(0.0));
        assert_eq!(RunningMax.slope(&p, 2.0, Side::Right), Some(1.0));
        assert_eq!(RunningMax.slope(&p, 2.0, Side::Central), Some(0.5));
    }

    #[test]
    fn running_min_mirrors_running_max() {
        let p = prefix(&[0.5, -1.0, 2.0]);
        let q = prefix(&[-0.5, 1.0, -2.0]);
        for &y in &[-3.0, -1.0, 0.0, 1.0, 4.0] {
            assert_eq!(RunningMin.replaced(&p, y), -RunningMax.replaced(&q, -y));
        }
    }

    #[test]
    fn psi_primitives_integrate_psi() {
        for psi in Psi::ALL {
            for &x in &[-1.5, 0.0, 0.7, 2.0] {
                // Simpson on a fine grid as an independent oracle.
                let n = 2000;
                let h = x / n as f64;
                let mut s = psi.value(0.0) + psi.value(x);
                for i in 1..n {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    s += w * psi.value(i as f64 * h);
                }
                let simpson = s * h / 3.0;
                assert!((psi.primitive(x) - simpson).abs() < 1e-10, "{psi:?} at {x}");
            }
        }
    }

    #[test]
    fn max_martingale_with_unit_psi_collapses_to_terminal_value() {
        let f = MaxMartingale::new(Psi::One, 0.25);
        let p = prefix(&[0.0, 1.0, -0.5]);
        for &y in &[-2.0, 0.3, 1.0, 1.7] {
            assert!((f.replaced(&p, y) - (y + 0.25)).abs() < 1e-15);
        }
    }

    #[test]
    fn max_martingale_identity_closed_form() {
        let f = MaxMartingale::new(Psi::Identity, 0.0);
        let (x1, x2) = (0.3, 1.2);
        assert!((f.h(x1, x2) - (x2 * x1 - 0.5 * x2 * x2)).abs() < 1e-15);
    }

    #[test]
    fn abs_left_slope_at_the_kink() {
        let f = AbsTerminalMinus::new(1.0);
        let p = prefix(&[0.0]);
        assert_eq!(f.slope(&p, 1.0, Side::Left), Some(-1.0));
        assert_eq!(f.slope(&p, 1.0, Side::Right), Some(1.0));
        assert_eq!(f.slope(&p, 1.0, Side::Central), Some(0.0));
    }

    #[test]
    fn psi_parsing() {
        assert_eq!("exp_neg".parse::<Psi>().unwrap(), Psi::ExpNeg);
        assert!("cosh".parse::<Psi>().is_err());
    }
}
