use super::{prefixes, BandConfig, VerificationReport};
use crate::error::{argument, Error, Result};
use crate::functionals::{left_slope, Functional, RunningMax};
use crate::localtime::{double_stieltjes, ito_integral, stieltjes_in_y, Convention};
use crate::paths::Path;

/// `|x_T - K| = |x_0 - K| + Σ sgn⁻(x_j - K) Δx_j + 2 L(T, K)` with the
/// quarter-convention band estimate of `L`.
pub fn check_classical_tanaka(k: f64, path: &Path, band: &BandConfig) -> Result<VerificationReport> {
    if band.convention != Convention::Quarter {
        return Err(Error::Convention("the factor 2 in the Tanaka formula assumes the quarter convention".into()));
    }
    let x = path.values();
    let n = path.end_index();
    let sgn = |y: f64| if y <= k { -1.0 } else { 1.0 };
    let integrand: Vec<f64> = x[..n].iter().map(|&v| sgn(v)).collect();
    let field = band.field(x, path, k)?;
    let local_time = field.final_at_level(k)?;
    let report = VerificationReport::new(
        "classical_tanaka",
        (x[n] - k).abs(),
        vec![
            ("f_X0", (x[0] - k).abs()),
            ("ito_integral", ito_integral(&integrand, path)?),
            ("local_time_term", 2.0 * local_time),
        ],
    );
    Ok(band.annotate(report, path).with_config("K", k).with_metric("local_time_at_K", local_time))
}

/// `m̄_T - x_0 = L^{x - m̄}(T, 0)`. The band process is `x - m̄` with the
/// inclusive running maximum, so it touches 0 at every new maximum. The
/// reported term uses `band.convention`; both conventions are recorded.
pub fn check_levy_max(path: &Path, band: &BandConfig) -> Result<VerificationReport> {
    let x = path.values();
    let running = path.running_max_trace();
    let z: Vec<f64> = x.iter().zip(&running).map(|(a, m)| a - m).collect();
    let mut per_convention = Vec::with_capacity(2);
    for conv in Convention::BOTH {
        let field = band.with_convention(conv).field(&z, path, 0.0)?;
        per_convention.push((conv, field.final_at_level(0.0)?));
    }
    let chosen = per_convention.iter().find(|(c, _)| *c == band.convention).map(|p| p.1).unwrap();
    let lhs = running[path.end_index()] - x[0];
    let mut report = band.annotate(VerificationReport::new("levy_max", lhs, vec![("local_time_at_zero", chosen)]), path);
    for (conv, l) in per_convention {
        report = report
            .with_metric(&format!("local_time_{}", conv.name()), l)
            .with_metric(&format!("residual_{}", conv.name()), lhs - l);
    }
    Ok(report)
}

/// `m̲_T - x_0 = -L^{x - m̲}(T, 0)`, obtained from [`check_levy_max`] on `-Y`
/// by negating every reported quantity.
pub fn check_levy_min(path: &Path, band: &BandConfig) -> Result<VerificationReport> {
    let mirrored = check_levy_max(&path.negate(), band)?;
    let terms = mirrored.terms.iter().map(|t| (t.name.as_str(), -t.value)).collect();
    let mut report = VerificationReport::new("levy_min", -mirrored.lhs, terms);
    report.config = mirrored.config.clone();
    report.metrics = mirrored.metrics.iter().map(|(k, v)| (k.clone(), -v)).collect();
    Ok(report)
}

/// Options of the functional Meyer-Tanaka assembly.
#[derive(Debug, Clone)]
pub struct MeyerTanaka {
    pub band: BandConfig,
    /// Finite-variation shift `a`; local time is then taken of `x - a` and
    /// the integrators are evaluated at `y + a_t`.
    pub shift: Option<Path>,
    /// Level anchor. Defaults to 0 with a shift, otherwise to the first kink
    /// of the final integrator, otherwise to `x_0`.
    pub anchor: Option<f64>,
    /// Also report `A_j = 2 (f(X_j) - f(X_0) - Σ_{i<j} Δ_t f dt - Σ_{i<j} Δ_x^- f Δx)`.
    pub compensator: bool,
}

impl MeyerTanaka {
    pub fn new(band: BandConfig) -> Self {
        Self { band, shift: None, anchor: None, compensator: false }
    }

    pub fn with_shift(mut self, shift: Path) -> Self {
        self.shift = Some(shift);
        self
    }

    pub fn with_anchor(mut self, anchor: f64) -> Self {
        self.anchor = Some(anchor);
        self
    }

    pub fn with_compensator(mut self) -> Self {
        self.compensator = true;
        self
    }
}

/// `f(X_T) = f(X_0) + Σ Δ_t f dt + Σ Δ_x^- f Δx
///   + ∫ L^{x-a}(T, y) d_y ∂⁻𝓕(X_T, y + a_T)
///   - ∫∫ L^{x-a}(s, y) d_{s,y} ∂⁻𝓕(X_s, y + a_s)`
/// for `f` convex or concave in the final value.
pub fn check_meyer_tanaka(f: &dyn Functional, path: &Path, opts: &MeyerTanaka) -> Result<VerificationReport> {
    if !(f.is_convex() || f.is_concave()) {
        return Err(Error::Unsupported(format!("{} is neither convex nor concave", f.name())));
    }
    let x = path.values();
    let n = path.end_index();
    let dt = path.grid().dt();
    let hist = prefixes(path);
    let shift: Vec<f64> = match &opts.shift {
        Some(a) => {
            if a.end_index() != n {
                return Err(argument(format!("shift has {} steps, path has {n}", a.end_index())));
            }
            a.values().to_vec()
        }
        None => vec![0.0; n + 1],
    };
    let anchor = opts.anchor.unwrap_or_else(|| match &opts.shift {
        Some(_) => 0.0,
        None => f.kinks(&hist[n + 1]).first().copied().unwrap_or(x[0]),
    });

    let f0 = f.replaced(&hist[0], x[0]);
    let mut time_terms = Vec::with_capacity(n);
    let mut integrand = Vec::with_capacity(n);
    for j in 0..n {
        let dt_f = f
            .time_derivative(&hist[j], x[j])
            .unwrap_or_else(|| (f.replaced(&hist[j + 1], x[j]) - f.replaced(&hist[j], x[j])) / dt);
        time_terms.push(dt_f * dt);
        integrand.push(left_slope(f, &hist[j + 1], x[j]));
    }
    let time_integral: f64 = time_terms.iter().sum();
    let ito = ito_integral(&integrand, path)?;

    let z: Vec<f64> = x.iter().zip(&shift).map(|(v, a)| v - a).collect();
    let field = opts.band.field(&z, path, anchor)?;
    let levels = *field.levels();
    let g = |j: usize, k: usize| left_slope(f, &hist[j + 1], levels.level(k) + shift[j]);
    let g_final: Vec<f64> = (0..levels.count).map(|k| g(n, k)).collect();
    let local_time_term = stieltjes_in_y(field.final_row(), &g_final)?;
    let double = double_stieltjes(&field, g);

    let lhs = f.replaced(&hist[n], x[n]);
    let mut report = VerificationReport::new(
        format!("meyer_tanaka[{}]", f.name()),
        lhs,
        vec![
            ("f_X0", f0),
            ("time_integral", time_integral),
            ("ito_integral", ito),
            ("local_time_term", local_time_term),
            ("minus_double_stieltjes", -double),
        ],
    );
    if opts.compensator {
        let mut trace = Vec::with_capacity(n + 1);
        let (mut t_acc, mut i_acc) = (0.0, 0.0);
        for j in 0..=n {
            trace.push(2.0 * (f.replaced(&hist[j], x[j]) - f0 - t_acc - i_acc));
            if j < n {
                t_acc += time_terms[j];
                i_acc += integrand[j] * (x[j + 1] - x[j]);
            }
        }
        report.compensator = Some(trace);
    }
    Ok(opts
        .band
        .annotate(report, path)
        .with_config("anchor", anchor)
        .with_config("shifted", opts.shift.is_some()))
}

/// The running maximum as an increasing functional: its Itô integrand
/// vanishes identically, its trace is nondecreasing, and the remaining terms
/// of the shifted assembly are those of [`check_levy_max`], whose report is
/// returned with the extra metrics attached.
pub fn check_increasing_functional(path: &Path, band: &BandConfig) -> Result<VerificationReport> {
    let x = path.values();
    let n = path.end_index();
    let hist = prefixes(path);
    let integrand_max = (0..n)
        .map(|j| left_slope(&RunningMax, &hist[j + 1], x[j]).abs())
        .fold(0.0, f64::max);
    let trace: Vec<f64> = (0..=n).map(|j| RunningMax.replaced(&hist[j], x[j])).collect();
    let monotone = trace.windows(2).all(|w| w[1] >= w[0]);

    let shift = Path::new(*path.grid(), path.running_max_trace())?;
    let mt = check_meyer_tanaka(&RunningMax, path, &MeyerTanaka::new(*band).with_shift(shift))?;
    let mut report = check_levy_max(path, band)?
        .with_metric("ito_integrand_max_abs", integrand_max)
        .with_metric("meyer_tanaka_ito_integral", mt.term("ito_integral").unwrap_or(f64::NAN))
        .with_metric("meyer_tanaka_residual", mt.residual)
        .with_metric("trace_monotone", if monotone { 1.0 } else { 0.0 });
    report.identity = "increasing_functional[running_max]".into();
    report.passed = Some(integrand_max == 0.0 && monotone);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{AbsTerminalMinus, PathIndependent, QuadraticVariation, RunningMin};
    use crate::paths::TimeGrid;
    use crate::simulate::{simulate_path, SimSpec};

    fn path(values: &[f64]) -> Path {
        Path::new(TimeGrid::new(1.0, values.len() - 1).unwrap(), values.to_vec()).unwrap()
    }

    fn band() -> BandConfig {
        BandConfig::new(0.02, 0.01).unwrap()
    }

    fn brownian(steps: usize, seed: u64) -> Path {
        simulate_path(&SimSpec::brownian(steps, seed).unwrap()).unwrap()
    }

    #[test]
    fn tanaka_without_crossings_telescopes() {
        let y = path(&[1.0, 1.3, 1.1, 1.7, 1.2]);
        let r = check_classical_tanaka(0.0, &y, &band()).unwrap();
        assert_eq!(r.term("local_time_term"), Some(0.0));
        assert!(r.residual.abs() < 1e-12);
        let below = check_classical_tanaka(-50.0, &brownian(1000, 4), &band()).unwrap();
        assert!(below.residual.abs() < 1e-12);
    }

    #[test]
    fn tanaka_hand_enumeration() {
        // K = 0, eps = 0.02: only x_0 = 0 and x_2 = 0.01 are within the band.
        let y = path(&[0.0, 0.1, 0.01, -0.2]);
        let r = check_classical_tanaka(0.0, &y, &band()).unwrap();
        let l = (0.01 + 0.0441) / (4.0 * 0.02);
        assert!((r.term("local_time_term").unwrap() - 2.0 * l).abs() < 1e-12);
        // sgn⁻: -1 at 0, +1 at 0.1, +1 at 0.01
        let ito = -0.1 + (0.01 - 0.1) + (-0.2 - 0.01);
        assert!((r.term("ito_integral").unwrap() - ito).abs() < 1e-15);
        assert!((r.lhs - 0.2).abs() < 1e-15);
    }

    #[test]
    fn staircase_levy_max() {
        let y = path(&[0.0, 0.01, 0.02, 0.05, 0.07]);
        let r = check_levy_max(&y, &band()).unwrap();
        assert!((r.lhs - 0.07).abs() < 1e-15);
        // x - m̄ ≡ 0 so every increment hits level 0.
        let q: f64 = [0.01f64, 0.01, 0.03, 0.02].iter().map(|d| d * d).sum();
        assert!((r.metrics["local_time_quarter"] - q / 0.08).abs() < 1e-12);
        assert_eq!(r.metrics["local_time_half"], 2.0 * r.metrics["local_time_quarter"]);
    }

    #[test]
    fn levy_min_mirrors_levy_max_exactly() {
        let y = brownian(5000, 9);
        let lo = check_levy_min(&y, &band()).unwrap();
        let hi = check_levy_max(&y.negate(), &band()).unwrap();
        assert_eq!(lo.residual, -hi.residual);
        assert_eq!(lo.lhs, -hi.lhs);
        let m = y.running_min_trace();
        assert_eq!(lo.lhs, m[m.len() - 1] - y.first());
        let dec = check_levy_min(&path(&[0.3, 0.2, 0.2, -0.1]), &band()).unwrap();
        assert!((dec.lhs + 0.4).abs() < 1e-15);
    }

    #[test]
    fn meyer_tanaka_abs_reproduces_tanaka() {
        let y = brownian(20_000, 21);
        let k = y.first();
        let classical = check_classical_tanaka(k, &y, &band()).unwrap();
        let mt = check_meyer_tanaka(&AbsTerminalMinus::new(k), &y, &MeyerTanaka::new(band())).unwrap();
        assert_eq!(mt.term("minus_double_stieltjes"), Some(0.0));
        for name in ["f_X0", "ito_integral", "local_time_term"] {
            assert!((mt.term(name).unwrap() - classical.term(name).unwrap()).abs() <= 1e-12, "{name}");
        }
        assert!((mt.residual - classical.residual).abs() <= 1e-12);
    }

    #[test]
    fn meyer_tanaka_running_max_reproduces_levy() {
        let y = brownian(20_000, 5);
        let shift = Path::new(*y.grid(), y.running_max_trace()).unwrap();
        let mt = check_meyer_tanaka(&RunningMax, &y, &MeyerTanaka::new(band()).with_shift(shift)).unwrap();
        let levy = check_levy_max(&y, &band()).unwrap();
        assert_eq!(mt.term("ito_integral"), Some(0.0));
        assert_eq!(mt.term("minus_double_stieltjes"), Some(0.0));
        assert_eq!(mt.term("local_time_term"), levy.term("local_time_at_zero"));
        assert!((mt.residual - levy.residual).abs() <= 1e-12);
    }

    #[test]
    fn meyer_tanaka_refuses_non_convex() {
        let y = path(&[0.0, 1.0]);
        let f = PathIndependent::new("cube", |_, y| y * y * y);
        assert_eq!(
            check_meyer_tanaka(&f, &y, &MeyerTanaka::new(band())).unwrap_err().kind(),
            "unsupported"
        );
        assert!(check_meyer_tanaka(&RunningMin, &y, &MeyerTanaka::new(band())).is_ok());
    }

    #[test]
    fn compensator_of_convex_functional_is_nondecreasing() {
        // Δ_t = 0 and smooth in the final value.
        let y = brownian(2000, 8);
        let mt = check_meyer_tanaka(&QuadraticVariation, &y, &MeyerTanaka::new(band()).with_compensator()).unwrap();
        let a = mt.compensator.unwrap();
        assert_eq!(a.len(), 2001);
        assert!(a.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!((a[2000] - 2.0 * mt.lhs).abs() < 1e-9);
    }

    #[test]
    fn increasing_functional_on_running_max() {
        let r = check_increasing_functional(&brownian(5000, 2), &band()).unwrap();
        assert_eq!(r.passed, Some(true));
        assert_eq!(r.metrics["ito_integrand_max_abs"], 0.0);
        let flat = check_increasing_functional(&path(&[0.4; 5]), &band()).unwrap();
        assert_eq!(flat.lhs, 0.0);
        assert_eq!(flat.passed, Some(true));
    }
}
