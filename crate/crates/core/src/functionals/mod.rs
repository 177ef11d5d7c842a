//! Functionals `f: Λ → ℝ` and estimators of their functional derivatives.
//!
//! The primitive of every [`Functional`] is `𝓕(Y_t, y) = f(Y_{t-}^y)`, the
//! value on the path whose final point is replaced by `y`. The strict prefix
//! `Y_{t-}` is passed as a [`PrefixStats`]. Bumps are then
//! `F(Y_t, h) = 𝓕(Y_t, y_t + h)`.

mod builtin;
mod estimate;

use std::fmt::Debug;
use std::sync::Arc;

pub use builtin::{
    AbsTerminalMinus, MaxMartingale, PathIndependent, Psi, QuadraticVariation, RunningIntegral,
    RunningMax, RunningMin, TerminalValue,
};
pub use estimate::{
    continuity_probe, default_steps, extrapolate, left_slope, second_space_derivative_est, space_derivative_est,
    time_derivative_est, DerivativeEstimate, DEFAULT_H0, DEFAULT_LEVELS,
};

use crate::error::{argument, Result};
use crate::paths::{Path, PrefixStats};

/// Which one-sided limit a space derivative takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    /// Symmetric difference; at a kink this is the average of the one-sided
    /// limits.
    Central,
}

impl std::str::FromStr for Side {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            "central" => Ok(Side::Central),
            other => Err(argument(format!("unknown side `{other}`"))),
        }
    }
}

pub trait Functional: Send + Sync + Debug {
    fn name(&self) -> String;

    /// `𝓕(Y_t, y)`: the functional on the path with strict prefix `prefix`
    /// and final value `y`.
    fn replaced(&self, prefix: &PrefixStats, y: f64) -> f64;

    /// `y ↦ 𝓕(Y_t, y)` is convex for every prefix.
    fn is_convex(&self) -> bool {
        false
    }

    fn is_concave(&self) -> bool {
        false
    }

    /// Analytic `Δ_t f` at the path `(prefix, y)`, if known.
    fn time_derivative(&self, _prefix: &PrefixStats, _y: f64) -> Option<f64> {
        None
    }

    /// Analytic one-sided derivative `∂_y^± 𝓕(Y_t, y)`, if known.
    fn slope(&self, _prefix: &PrefixStats, _y: f64, _side: Side) -> Option<f64> {
        None
    }

    /// Analytic `∂_yy 𝓕(Y_t, y)` where it exists.
    fn curvature(&self, _prefix: &PrefixStats, _y: f64) -> Option<f64> {
        None
    }

    /// Levels where `y ↦ 𝓕(Y_t, y)` fails to be smooth.
    fn kinks(&self, _prefix: &PrefixStats) -> Vec<f64> {
        Vec::new()
    }

    fn evaluate(&self, path: &Path) -> f64 {
        self.replaced(&PrefixStats::of(path), path.last())
    }
}

impl<T: Functional + ?Sized> Functional for Arc<T> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn replaced(&self, prefix: &PrefixStats, y: f64) -> f64 {
        (**self).replaced(prefix, y)
    }
    fn is_convex(&self) -> bool {
        (**self).is_convex()
    }
    fn is_concave(&self) -> bool {
        (**self).is_concave()
    }
    fn time_derivative(&self, prefix: &PrefixStats, y: f64) -> Option<f64> {
        (**self).time_derivative(prefix, y)
    }
    fn slope(&self, prefix: &PrefixStats, y: f64, side: Side) -> Option<f64> {
        (**self).slope(prefix, y, side)
    }
    fn curvature(&self, prefix: &PrefixStats, y: f64) -> Option<f64> {
        (**self).curvature(prefix, y)
    }
    fn kinks(&self, prefix: &PrefixStats) -> Vec<f64> {
        (**self).kinks(prefix)
    }
}

/// `F(Y_t, h) = f(Y_t^h)`.
pub fn eval_bumped(f: &dyn Functional, path: &Path, h: f64) -> f64 {
    f.replaced(&PrefixStats::of(path), path.last() + h)
}

/// `𝓕(Y_t, y) = f(Y_{t-}^y)`.
pub fn eval_replaced(f: &dyn Functional, path: &Path, y: f64) -> f64 {
    f.replaced(&PrefixStats::of(path), y)
}

/// Built-in lookup used by the CLI. `k` parameterizes `abs_terminal_minus`;
/// `psi` and `h0` parameterize `max_martingale`.
pub fn from_name(name: &str, k: f64, psi: Psi, h0: f64) -> Result<Arc<dyn Functional>> {
    Ok(match name {
        "running_max" => Arc::new(RunningMax),
        "running_min" => Arc::new(RunningMin),
        "running_integral" => Arc::new(RunningIntegral),
        "quadratic_variation" => Arc::new(QuadraticVariation),
        "terminal_value" => Arc::new(TerminalValue),
        "abs_terminal_minus" => Arc::new(AbsTerminalMinus::new(k)),
        "square" => Arc::new(PathIndependent::square()),
        "max_martingale" => Arc::new(MaxMartingale::new(psi, h0)),
        other => {
            return Err(argument(format!(
                "unknown functional `{other}` (expected one of {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    })
}

pub const BUILTIN_NAMES: [&str; 8] = [
    "running_max",
    "running_min",
    "running_integral",
    "quadratic_variation",
    "terminal_value",
    "abs_terminal_minus",
    "square",
    "max_martingale",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::TimeGrid;

    fn path(values: &[f64]) -> Path {
        Path::new(TimeGrid::new(1.0, 8).unwrap(), values.to_vec()).unwrap()
    }

    #[test]
    fn running_max_bump_examples() {
        let y = path(&[0.0, 2.0, 1.0]);
        assert_eq!(eval_bumped(&RunningMax, &y, 0.0), 2.0);
        assert_eq!(eval_bumped(&RunningMax, &y, 2.0), 3.0);
        assert_eq!(eval_bumped(&RunningMax, &y, -5.0), 2.0);
    }

    #[test]
    fn running_max_replace_examples() {
        let y = path(&[0.0, 2.0, 1.0]);
        assert_eq!(eval_replaced(&RunningMax, &y, 5.0), 5.0);
        assert_eq!(eval_replaced(&RunningMax, &y, 1.0), 2.0);
    }

    #[test]
    fn quadratic_variation_replace() {
        let y = path(&[0.0, 0.5, 0.25, 1.0]);
        let prefix_qv = 0.25 + 0.0625;
        for &v in &[-1.0, 0.25, 3.0] {
            let want = prefix_qv + (v - 0.25f64).powi(2);
            assert!((eval_replaced(&QuadraticVariation, &y, v) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn evaluate_agrees_with_explicit_deformations() {
        let y = path(&[0.3, -0.2, 0.9, 0.1]);
        let fs = all_builtins();
        for f in &fs {
            assert_eq!(eval_bumped(f.as_ref(), &y, 0.4), f.evaluate(&y.bump(0.4)), "{}", f.name());
            assert_eq!(eval_replaced(f.as_ref(), &y, -1.0), f.evaluate(&y.replace_last(-1.0)));
        }
    }

    pub(crate) fn all_builtins() -> Vec<Arc<dyn Functional>> {
        BUILTIN_NAMES
            .iter()
            .map(|n| from_name(n, 0.25, Psi::Identity, 0.5).unwrap())
            .collect()
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(from_name("sup_norm", 0.0, Psi::One, 0.0).is_err());
    }
}
