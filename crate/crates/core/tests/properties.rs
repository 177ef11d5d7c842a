use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;

use pathcalc::functionals::{
    default_steps, eval_bumped, from_name, left_slope, space_derivative_est, Functional, Psi, RunningMax,
    RunningMin, Side, BUILTIN_NAMES,
};
use pathcalc::mollify::{mollified_deriv, mollify};
use pathcalc::paths::{lambda_distance, Path, PrefixStats, TimeGrid};

const STEPS: usize = 40;

fn grid() -> TimeGrid {
    TimeGrid::unit(STEPS).unwrap()
}

fn walk(start: f64, increments: Vec<f64>) -> Path {
    let mut values = Vec::with_capacity(increments.len() + 1);
    let mut x = start;
    values.push(x);
    for d in increments {
        x += d;
        values.push(x);
    }
    Path::new(grid(), values).unwrap()
}

fn path_strategy() -> impl Strategy<Value = Path> {
    (-1.0f64..1.0, prop::collection::vec(-0.3f64..0.3, 1..STEPS)).prop_map(|(x0, inc)| walk(x0, inc))
}

/// Three paths on the same grid; lengths may differ.
fn triple_strategy() -> impl Strategy<Value = (Path, Path, Path)> {
    (path_strategy(), path_strategy(), path_strategy())
}

fn builtins() -> Vec<Arc<dyn Functional>> {
    BUILTIN_NAMES
        .iter()
        .map(|name| from_name(name, 0.25, Psi::Identity, 0.5).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bump_shift_commutes_for_builtins(y in path_strategy(), z in -1.0f64..1.0, h in -1.0f64..1.0) {
        for f in builtins() {
            let twice = eval_bumped(f.as_ref(), &y.bump(z), h);
            let once = eval_bumped(f.as_ref(), &y, z + h);
            assert_relative_eq!(twice, once, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn mollified_bump_shift_commutes(y in path_strategy(), z in -0.5f64..0.5, h in -0.5f64..0.5, n in 1usize..40) {
        for name in ["running_max", "abs_terminal_minus", "quadratic_variation"] {
            let base = from_name(name, 0.1, Psi::One, 0.0).unwrap();
            let fnn = mollify(base, n, 32).unwrap();
            let twice = eval_bumped(&fnn, &y.bump(z), h);
            let once = eval_bumped(&fnn, &y, z + h);
            assert_relative_eq!(twice, once, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn running_min_is_reflected_running_max(y in path_strategy()) {
        prop_assert_eq!(RunningMin.evaluate(&y), -RunningMax.evaluate(&y.negate()));
    }

    #[test]
    fn flat_extension_keeps_running_max(y in path_strategy(), extra in 0usize..10) {
        let index = (y.end_index() + extra).min(STEPS);
        let ext = y.flat_extend_to_index(index).unwrap();
        prop_assert_eq!(RunningMax.evaluate(&ext), RunningMax.evaluate(&y));
    }

    #[test]
    fn running_max_commutation(y in path_strategy(), extra in 1usize..5, xi in -1.0f64..1.0) {
        let index = (y.end_index() + extra).min(STEPS);
        let extend_then_bump = y.flat_extend_to_index(index).unwrap().bump(xi);
        let bump_then_extend = y.bump(xi).flat_extend_to_index(index).unwrap();
        let expected = RunningMax.evaluate(&y).max(y.last() + xi);
        prop_assert_eq!(RunningMax.evaluate(&extend_then_bump), expected);
        // On a grid the bump erases y_t from the history, so the two orders
        // only agree for upward bumps or when y_t is not the strict maximum.
        let strict = PrefixStats::of(&y).max();
        prop_assert_eq!(RunningMax.evaluate(&bump_then_extend), strict.max(y.last() + xi));
        if xi >= 0.0 || y.last() <= strict {
            prop_assert_eq!(RunningMax.evaluate(&extend_then_bump), RunningMax.evaluate(&bump_then_extend));
        }
    }

    #[test]
    fn lambda_distance_is_a_metric((a, b, c) in triple_strategy()) {
        let ab = lambda_distance(&a, &b).unwrap();
        let ba = lambda_distance(&b, &a).unwrap();
        let bc = lambda_distance(&b, &c).unwrap();
        let ac = lambda_distance(&a, &c).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(lambda_distance(&a, &a).unwrap(), 0.0);
        if ab == 0.0 {
            prop_assert_eq!(a.values(), b.values());
        }
        prop_assert!(ac <= ab + bc + 1e-12, "triangle: {} > {} + {}", ac, ab, bc);
    }

    #[test]
    fn convex_functionals_are_midpoint_convex(y in path_strategy(), h1 in -1.0f64..1.0, h2 in -1.0f64..1.0) {
        let mid = 0.5 * (h1 + h2);
        for f in builtins().into_iter().filter(|f| f.is_convex()) {
            let lhs = eval_bumped(f.as_ref(), &y, mid);
            let rhs = 0.5 * (eval_bumped(f.as_ref(), &y, h1) + eval_bumped(f.as_ref(), &y, h2));
            prop_assert!(lhs <= rhs + 1e-12 * rhs.abs().max(1.0), "{}: {} > {}", f.name(), lhs, rhs);
        }
    }

    #[test]
    fn left_slope_nondecreasing_for_convex(y in path_strategy(), h1 in -1.0f64..1.0, h2 in -1.0f64..1.0) {
        let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
        let prefix = PrefixStats::of(&y);
        for f in builtins().into_iter().filter(|f| f.is_convex()) {
            let a = left_slope(f.as_ref(), &prefix, y.last() + lo);
            let b = left_slope(f.as_ref(), &prefix, y.last() + hi);
            prop_assert!(a <= b + 1e-12, "{}: slope {} at {} above {} at {}", f.name(), a, lo, b, hi);
        }
    }

    #[test]
    fn analytic_slopes_match_finite_differences(y in path_strategy()) {
        let prefix = PrefixStats::of(&y);
        let steps = default_steps(1e-2, 6);
        for f in builtins() {
            for side in [Side::Left, Side::Right] {
                let Some(exact) = f.slope(&prefix, y.last(), side) else { continue };
                let est = space_derivative_est(f.as_ref(), &y, side, &steps).unwrap();
                prop_assert!(
                    (est.value - exact).abs() <= est.residual + 1e-6,
                    "{} {:?}: estimate {} vs analytic {}", f.name(), side, est.value, exact
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mollified_convex_stays_convex(y in path_strategy(), h1 in -0.5f64..0.5, h2 in -0.5f64..0.5, n in 1usize..30) {
        let mid = 0.5 * (h1 + h2);
        for name in ["running_max", "abs_terminal_minus"] {
            let fnn = mollify(from_name(name, 0.0, Psi::One, 0.0).unwrap(), n, 64).unwrap();
            let lhs = eval_bumped(&fnn, &y, mid);
            let rhs = 0.5 * (eval_bumped(&fnn, &y, h1) + eval_bumped(&fnn, &y, h2));
            prop_assert!(lhs <= rhs + 1e-12 * rhs.abs().max(1.0), "{}: {} > {}", name, lhs, rhs);
        }
    }

    #[test]
    fn mollified_slope_within_envelope(y in path_strategy(), n in 1usize..60, k in -0.5f64..0.5) {
        let prefix = PrefixStats::of(&y);
        let radius = 1.0 / n as f64;
        for base in [from_name("running_max", 0.0, Psi::One, 0.0).unwrap(), from_name("abs_terminal_minus", k, Psi::One, 0.0).unwrap()] {
            let fnn = mollify(base.clone(), n, 64).unwrap();
            let dx = mollified_deriv(&fnn, 1, &y, 0.0).unwrap();
            let bound = left_slope(base.as_ref(), &prefix, y.last() + radius).abs()
                + left_slope(base.as_ref(), &prefix, y.last() - radius).abs();
            prop_assert!(dx.abs() <= bound + 1e-9, "{}: |{}| > {}", base.name(), dx, bound);
        }
    }

    #[test]
    fn mollified_running_max_has_zero_time_derivative(y in path_strategy(), n in 1usize..60) {
        let fnn = mollify(Arc::new(RunningMax), n, 64).unwrap();
        let prefix = PrefixStats::of(&y);
        prop_assert_eq!(fnn.time_derivative(&prefix, y.last()), Some(0.0));
        // Once y_t sits in the history, holding it longer changes nothing.
        prop_assume!(y.end_index() + 2 <= STEPS);
        let now = fnn.evaluate(&y.flat_extend_to_index(y.end_index() + 1).unwrap());
        let later = fnn.evaluate(&y.flat_extend_to_index(y.end_index() + 2).unwrap());
        assert_relative_eq!(now, later, epsilon = 1e-12, max_relative = 1e-12);
    }
}
