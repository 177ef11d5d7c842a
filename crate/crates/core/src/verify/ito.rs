use super::{prefixes, BandConfig, VerificationReport};
use crate::error::{Error, Result};
use crate::functionals::{Functional, Psi, Side};
use crate::localtime::{ito_integral, occupation_lhs, occupation_rhs, occupation_rhs_indexed, qv_process, Convention};
use crate::paths::Path;

fn unsupported(f: &dyn Functional, what: &str) -> Error {
    Error::Unsupported(format!("{} has no analytic {what}", f.name()))
}

/// `f(X_T) = f(X_0) + Σ Δ_t f dt + Σ Δ_x f Δx + ½ Σ Δ_xx f (Δx)²`.
pub fn check_functional_ito(f: &dyn Functional, path: &Path) -> Result<VerificationReport> {
    let hist = prefixes(path);
    let x = path.values();
    let n = path.end_index();
    let dt = path.grid().dt();

    let mut time_integral = 0.0;
    let mut slopes = Vec::with_capacity(n);
    let mut second_order = 0.0;
    for j in 0..n {
        let dt_f = f.time_derivative(&hist[j], x[j]).ok_or_else(|| unsupported(f, "time derivative"))?;
        time_integral += dt_f * dt;
        let ext = &hist[j + 1];
        slopes.push(f.slope(ext, x[j], Side::Central).ok_or_else(|| unsupported(f, "space derivative"))?);
        let c = f.curvature(ext, x[j]).ok_or_else(|| unsupported(f, "second space derivative"))?;
        let d = x[j + 1] - x[j];
        second_order += 0.5 * c * d * d;
    }
    let lhs = f.replaced(&hist[n], x[n]);
    let report = VerificationReport::new(
        format!("functional_ito[{}]", f.name()),
        lhs,
        vec![
            ("f_X0", f.replaced(&hist[0], x[0])),
            ("time_integral", time_integral),
            ("ito_integral", ito_integral(&slopes, path)?),
            ("second_order", second_order),
        ],
    );
    Ok(report.with_config("N", n).with_config("T", path.end_time()))
}

fn require_quarter(band: &BandConfig, identity: &str) -> Result<()> {
    if band.convention != Convention::Quarter {
        return Err(Error::Convention(format!("{identity} is stated for the quarter convention")));
    }
    Ok(())
}

/// `Σ ψ(x_j) (Δx_j)² ≈ 2 ∫ ψ(y) L(T, y) dy`. The relative gap is measured
/// against `Σ |ψ(x_j)| (Δx_j)²`, which stays away from 0 when `ψ` changes
/// sign.
pub fn check_occupation(psi: Psi, path: &Path, band: &BandConfig) -> Result<VerificationReport> {
    require_quarter(band, "the occupation formula")?;
    let field = band.field(path.values(), path, path.first())?;
    let lhs = occupation_lhs(|_, y| psi.value(y), path);
    let rhs = occupation_rhs(|_, y| psi.value(y), &field)?;
    let scale = occupation_lhs(|_, y| psi.value(y).abs(), path);
    let report = VerificationReport::new(format!("occupation[{}]", psi.name()), lhs, vec![("local_time_form", rhs)]);
    let gap = report.residual.abs() / scale.max(f64::MIN_POSITIVE);
    Ok(band
        .annotate(report, path)
        .with_config("psi", psi.name())
        .with_metric("scale", scale)
        .with_metric("relative_gap", gap))
}

/// `⟨x⟩_T = 2 ∫ L(T, y) dy`.
pub fn qv_identity(path: &Path, band: &BandConfig) -> Result<VerificationReport> {
    require_quarter(band, "the quadratic-variation identity")?;
    let field = band.field(path.values(), path, path.first())?;
    let lhs = qv_process(path).last();
    let report = VerificationReport::new("qv_identity", lhs, vec![("local_time_mass", field.total_mass(path.end_index()))]);
    let gap = report.relative_residual(f64::MIN_POSITIVE);
    Ok(band.annotate(report, path).with_metric("relative_gap", gap))
}

/// Occupation formula for the running integral `I_t = ∫_0^t x_u du`:
/// `Σ_j I_j (Δx_j)² = Σ_j (q_N - q_{j+1}) x_j dt`.
///
/// The right side is the summation-by-parts form and holds exactly; the
/// local-time form `2 ∫ Σ_i I_i (L[i+1](y) - L[i](y)) dy` is reported as a
/// metric together with its relative gap.
pub fn check_occupation_running_integral(path: &Path, band: &BandConfig) -> Result<VerificationReport> {
    require_quarter(band, "the occupation formula")?;
    let x = path.values();
    let n = path.end_index();
    let dt = path.grid().dt();
    let q = qv_process(path).values;

    // I_j = Σ_{i<j} x_i dt
    let mut running = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    for &v in x {
        running.push(acc);
        acc += v * dt;
    }
    let lhs: f64 = (0..n).map(|j| running[j] * (x[j + 1] - x[j]).powi(2)).sum();
    let by_parts: f64 = (0..n).map(|j| (q[n] - q[j + 1]) * x[j] * dt).sum();

    let field = band.field(x, path, path.first())?;
    let lt_form = occupation_rhs_indexed(|i, _| running[i], &field)?;

    let report = VerificationReport::new("occupation_running_integral", lhs, vec![("summation_by_parts", by_parts)]);
    let lt_gap = (lhs - lt_form).abs() / lhs.abs().max(f64::MIN_POSITIVE);
    Ok(band
        .annotate(report, path)
        .with_metric("local_time_form", lt_form)
        .with_metric("local_time_relative_gap", lt_gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{PathIndependent, QuadraticVariation, RunningIntegral, RunningMax};
    use crate::paths::TimeGrid;
    use crate::simulate::{simulate_path, SimSpec};

    fn path(values: &[f64]) -> Path {
        Path::new(TimeGrid::new(1.0, values.len() - 1).unwrap(), values.to_vec()).unwrap()
    }

    #[test]
    fn qv_ito_on_three_step_path() {
        let y = path(&[0.0, 0.5, -0.25, 1.0]);
        let r = check_functional_ito(&QuadraticVariation, &y).unwrap();
        // 0.25 + 0.5625 + 1.5625
        assert!((r.lhs - 2.375).abs() < 1e-15);
        assert_eq!(r.term("ito_integral"), Some(0.0));
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn running_integral_ito_is_exact() {
        let y = simulate_path(&SimSpec::brownian(2000, 3).unwrap()).unwrap();
        let r = check_functional_ito(&RunningIntegral, &y).unwrap();
        assert!(r.residual.abs() <= 1e-12 * r.lhs.abs().max(1.0));
    }

    #[test]
    fn square_ito_error_is_order_sqrt_dt() {
        for (steps, seed) in [(10_000usize, 1u64), (40_000, 2)] {
            let y = simulate_path(&SimSpec::brownian(steps, seed).unwrap()).unwrap();
            let r = check_functional_ito(&PathIndependent::square(), &y).unwrap();
            assert!(r.residual.abs() < 10.0 * y.grid().dt().sqrt(), "{}", r.residual);
        }
    }

    #[test]
    fn missing_derivatives_are_unsupported() {
        let y = path(&[0.0, 1.0, 0.5]);
        let err = check_functional_ito(&RunningMax, &y).unwrap_err();
        assert_eq!(err.kind(), "unsupported");
        let bare = PathIndependent::new("bare", |_, y| y);
        assert!(check_functional_ito(&bare, &y).is_err());
    }

    #[test]
    fn running_integral_occupation_hand_path() {
        let y = path(&[0.0, 1.0, 1.0, 2.0]);
        let r = check_occupation_running_integral(&y, &BandConfig::new(0.1, 0.05).unwrap()).unwrap();
        assert!((r.lhs - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.rhs - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn running_integral_occupation_constant_path() {
        let y = path(&[0.7; 6]);
        let r = check_occupation_running_integral(&y, &BandConfig::new(0.1, 0.05).unwrap()).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn half_convention_is_refused_where_the_formula_assumes_quarter() {
        let y = path(&[0.0, 1.0]);
        let band = BandConfig::new(0.1, 0.05).unwrap().with_convention(Convention::Half);
        assert_eq!(qv_identity(&y, &band).unwrap_err().kind(), "convention");
    }

    #[test]
    fn occupation_on_brownian_path() {
        let y = simulate_path(&SimSpec::brownian(100_000, 11).unwrap()).unwrap();
        let band = BandConfig::new(0.02, 0.01).unwrap();
        for psi in [Psi::One, Psi::Identity, Psi::Square] {
            let r = check_occupation(psi, &y, &band).unwrap();
            assert!(r.metrics["relative_gap"] < 0.05, "{psi:?}: {:?}", r.metrics);
        }
    }
}
