//! The acceptance criteria as runnable checks, shared by the `all`
//! subcommand and the `acceptance` test target.

pub mod tolerances;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};
use crate::functionals::{
    default_steps, eval_bumped, from_name, second_space_derivative_est, space_derivative_est, AbsTerminalMinus,
    Functional, MaxMartingale, PathIndependent, Psi, QuadraticVariation, RunningIntegral, RunningMax, RunningMin,
    Side, BUILTIN_NAMES,
};
use crate::localtime::Convention;
use crate::mollify::{convergence_report, mollified_deriv, mollify, GaussLegendre, Mollifier, DEFAULT_NODES};
use crate::paths::{lambda_distance, Path, TimeGrid};
use crate::simulate::{map_ensemble, mix, simulate_path, NormalStream, ProcessKind, SimSpec};
use crate::verify::{
    check_classical_tanaka, check_condition_h, check_functional_ito, check_levy_max, check_levy_min,
    check_meyer_tanaka, check_occupation, check_occupation_running_integral, drift_test, qv_identity, recover_psi,
    sample_checkpoints, BandConfig, MeanStats, MeyerTanaka, ProbeGrid, SCHEMA_VERSION,
};
use tolerances as tol;

/// Problem sizes. `Full` is the size the criteria are stated at; `Quick`
/// runs the same code on small ensembles for smoke and determinism tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    Quick,
}

impl std::str::FromStr for Scale {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "quick" => Ok(Scale::Quick),
            other => Err(argument(format!("unknown scale `{other}` (full, quick)"))),
        }
    }
}

struct Sizes {
    exact_paths: usize,
    exact_steps: usize,
    triples: usize,
    ensemble_paths: usize,
    ensemble_steps: usize,
    sanity_paths: usize,
    sanity_steps: usize,
    pathwise_paths: usize,
    martingale_paths: usize,
    martingale_steps: usize,
    psi_paths: usize,
    convexity_triples: usize,
}

impl Scale {
    fn sizes(self) -> Sizes {
        match self {
            Scale::Full => Sizes {
                exact_paths: 24,
                exact_steps: 10_000,
                triples: 1000,
                ensemble_paths: 200,
                ensemble_steps: 100_000,
                sanity_paths: 10_000,
                sanity_steps: 100_000,
                pathwise_paths: 20,
                martingale_paths: 10_000,
                martingale_steps: 10_000,
                psi_paths: 50,
                convexity_triples: 100,
            },
            Scale::Quick => Sizes {
                exact_paths: 6,
                exact_steps: 500,
                triples: 100,
                ensemble_paths: 16,
                ensemble_steps: 4_000,
                sanity_paths: 400,
                sanity_steps: 1_000,
                pathwise_paths: 3,
                martingale_paths: 400,
                martingale_steps: 500,
                psi_paths: 8,
                convexity_triples: 20,
            },
        }
    }
}

pub const CRITERIA: [(u8, &str); 9] = [
    (1, "exact discrete identities"),
    (2, "classical tanaka"),
    (3, "pathwise levy identity"),
    (4, "quadratic variation and local time"),
    (5, "occupation time formula"),
    (6, "functional meyer-tanaka assembly"),
    (7, "max-martingales"),
    (8, "mollification"),
    (9, "determinism"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    /// One line: the measured quantities against their bounds.
    pub summary: String,
    pub metrics: BTreeMap<String, f64>,
}

impl Criterion {
    fn new(id: u8) -> Self {
        let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown");
        Self { id, name: name.to_string(), passed: true, summary: String::new(), metrics: BTreeMap::new() }
    }

    /// Records a sub-check; the criterion passes only if all of them do.
    fn check(&mut self, label: &str, ok: bool, detail: String) {
        self.passed &= ok;
        if !self.summary.is_empty() {
            self.summary.push_str("; ");
        }
        self.summary.push_str(&format!("{label} {} ({detail})", if ok { "ok" } else { "FAIL" }));
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    /// `criterion N PASS|FAIL name: summary`.
    pub fn line(&self) -> String {
        format!(
            "criterion {} {} {}: {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.summary
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub scale: Scale,
    pub seed: u64,
    pub criteria: Vec<Criterion>,
    pub passed: bool,
}

pub fn run_suite(scale: Scale, seed: u64, ids: &[u8]) -> Result<SuiteReport> {
    let criteria = ids.iter().map(|&id| run_criterion(id, scale, seed)).collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION,
        scale,
        seed,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    })
}

pub fn all_ids() -> Vec<u8> {
    CRITERIA.iter().map(|c| c.0).collect()
}

pub fn run_criterion(id: u8, scale: Scale, seed: u64) -> Result<Criterion> {
    let s = scale.sizes();
    match id {
        1 => exact_identities(&s, seed),
        2 => classical_tanaka(&s, seed),
        3 => levy(&s, seed),
        4 => qv_local_time(&s, seed),
        5 => occupation(&s, seed),
        6 => meyer_tanaka(&s, seed),
        7 => max_martingales(&s, seed),
        8 => mollification(&s, seed),
        9 => determinism(seed),
        other => Err(argument(format!("no acceptance criterion {other}"))),
    }
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (sum / n.max(1) as f64).sqrt()
}

fn ratio(base: f64, refined: f64) -> f64 {
    if refined == 0.0 {
        f64::INFINITY
    } else {
        base / refined
    }
}

fn band(epsilon: f64, dy: f64) -> BandConfig {
    BandConfig::new(epsilon, dy).expect("suite band parameters are positive")
}

/// The shared Brownian ensemble of criteria 2, 3 and 6, at refinement
/// level `level` (`N 4^level`, `ε 2^-level`).
fn shared_ensemble(s: &Sizes, seed: u64, level: u32) -> Result<(SimSpec, BandConfig)> {
    let steps = s.ensemble_steps * 4usize.pow(level);
    let epsilon = 0.02 / 2f64.powi(level as i32);
    Ok((SimSpec::brownian(steps, mix(seed, 2))?, band(epsilon, epsilon / 2.0)))
}

fn exact_identities(s: &Sizes, seed: u64) -> Result<Criterion> {
    let mut c = Criterion::new(1);
    let grid = TimeGrid::unit(s.exact_steps)?;
    let kinds = [
        (ProcessKind::Brownian, 0.0, 1.0, 0.0),
        (ProcessKind::DriftedBrownian, 0.3, 1.3, 0.7),
        (ProcessKind::ScaledBrownian, -1.0, 0.4, 0.0),
    ];
    let mut worst_ito = 0.0f64;
    let mut worst_reflection = 0.0f64;
    for j in 0..s.exact_paths {
        let (kind, x0, sigma, mu) = kinds[j % kinds.len()];
        let spec = SimSpec { kind, x0, sigma, mu, grid, seed: mix(seed, 100 + j as u64) };
        let path = simulate_path(&spec)?;
        for f in [&RunningIntegral as &dyn Functional, &QuadraticVariation] {
            let r = check_functional_ito(f, &path)?;
            let scale = r.terms.iter().map(|t| t.value.abs()).sum::<f64>().max(r.lhs.abs()).max(f64::MIN_POSITIVE);
            worst_ito = worst_ito.max(r.residual.abs() / scale);
        }
        let lo = path.running_min_trace();
        let hi = path.negate().running_max_trace();
        for (a, b) in lo.iter().zip(&hi) {
            worst_reflection = worst_reflection.max((a + b).abs() / a.abs().max(1.0));
        }
        let direct = RunningMin.evaluate(&path);
        let mirrored = -RunningMax.evaluate(&path.negate());
        worst_reflection = worst_reflection.max((direct - mirrored).abs() / direct.abs().max(1.0));
    }
    c.metric("ito_max_relative_residual", worst_ito);
    c.metric("reflection_max_relative_gap", worst_reflection);
    c.check("ito", worst_ito < tol::EXACT_RELATIVE, format!("max rel residual {worst_ito:.2e}"));

    let functionals: Vec<Arc<dyn Functional>> = BUILTIN_NAMES
        .iter()
        .map(|n| from_name(n, 0.25, Psi::Identity, 0.5))
        .collect::<Result<_>>()?;
    let small = TimeGrid::unit(64)?;
    let mut rng = NormalStream::new(mix(seed, 1));
    let mut worst_shift = 0.0f64;
    let mut metric_ok = true;
    let mut worst_triangle = f64::NEG_INFINITY;
    for j in 0..s.triples {
        let path = random_path(&mut rng, &small);
        let z = 2.0 * rng.uniform() - 1.0;
        let h = 2.0 * rng.uniform() - 1.0;
        let f = &functionals[j % functionals.len()];
        let twice = eval_bumped(f.as_ref(), &path.bump(z), h);
        let once = eval_bumped(f.as_ref(), &path, z + h);
        worst_shift = worst_shift.max((twice - once).abs() / once.abs().max(1.0));

        let (a, b, d) = (random_path(&mut rng, &small), random_path(&mut rng, &small), random_path(&mut rng, &small));
        let ab = lambda_distance(&a, &b)?;
        let ba = lambda_distance(&b, &a)?;
        let bd = lambda_distance(&b, &d)?;
        let ad = lambda_distance(&a, &d)?;
        let aa = lambda_distance(&a, &a)?;
        let separates = a == b || ab > 0.0;
        metric_ok &= aa == 0.0 && ab == ba && ab >= 0.0 && separates;
        worst_triangle = worst_triangle.max(ad - ab - bd);
    }
    metric_ok &= worst_triangle <= 1e-12;
    c.metric("bump_shift_max_relative_gap", worst_shift);
    c.metric("triangle_max_excess", worst_triangle);
    c.check("bump-shift", worst_shift < tol::EXACT_RELATIVE, format!("max rel gap {worst_shift:.2e}"));
    c.check(
        "reflection",
        worst_reflection < tol::EXACT_RELATIVE,
        format!("max rel gap {worst_reflection:.2e}"),
    );
    c.check(
        "metric axioms",
        metric_ok,
        format!("{} triples, max triangle excess {worst_triangle:.2e}", s.triples),
    );
    Ok(c)
}

/// A path on `grid` with a random end index and uniform increments.
fn random_path(rng: &mut NormalStream, grid: &TimeGrid) -> Path {
    let end = (rng.uniform() * (grid.steps() + 1) as f64) as usize;
    let mut values = Vec::with_capacity(end + 1);
    let mut v = 2.0 * rng.uniform() - 1.0;
    values.push(v);
    for _ in 0..end.min(grid.steps()) {
        v += rng.uniform() - 0.5;
        values.push(v);
    }
    Path::new(*grid, values).expect("finite values within the grid")
}

fn classical_tanaka(s: &Sizes, seed: u64) -> Result<Criterion> {
    let mut c = Criterion::new(2);
    let mut levels = Vec::with_capacity(2);
    for level in 0..2 {
        let (spec, b) = shared_ensemble(s, seed, level)?;
        let res = map_ensemble(&spec, s.ensemble_paths, |_, p| Ok(check_classical_tanaka(p.first(), p, &b)?.residual))?;
        levels.push(rms(res.into_iter()));
    }
    let factor = ratio(levels[0], levels[1]);
    c.metric("rms_residual", levels[0]);
    c.metric("rms_residual_refined", levels[1]);
    c.metric("refinement_factor", factor);
    c.check("rms", levels[0] < tol::TANAKA_RMS, format!("{:.4} < {}", levels[0], tol::TANAKA_RMS));
    c.check(
        "refinement",
        factor >= tol::REFINEMENT_FACTOR,
        format!("{:.4} -> {:.4}, factor {factor:.3} >= {}", levels[0], levels[1], tol::REFINEMENT_FACTOR),
    );
    Ok(c)
}

/// Relative RMS error of each convention for the running max or, with
/// `min`, the running min version of the identity.
fn levy_errors(spec: &SimSpec, n: usize, b: &BandConfig, min: bool) -> Result<Vec<(Convention, f64)>> {
    let rows = map_ensemble(spec, n, |_, p| {
        let r = if min { check_levy_min(p, b)? } else { check_levy_max(p, b)? };
        Ok((r.lhs, r.metrics["residual_quarter"], r.metrics["residual_half"]))
    })?;
    let lhs = rms(rows.iter().map(|r| r.0));
    Ok(vec![
        (Convention::Quarter, rms(rows.iter().map(|r| r.1)) / lhs),
        (Convention::Half, rms(rows.iter().map(|r| r.2)) / lhs),
    ])
}

fn levy(s: &Sizes, seed: u64) -> Result<Criterion> {
    let mut c = Criterion::new(3);
    let (spec, b) = shared_ensemble(s, seed, 0)?;
    let max_err = levy_errors(&spec, s.ensemble_paths, &b, false)?;
    let min_err = levy_errors(&spec, s.ensemble_paths, &b, true)?;
    for ((conv, e), (_, m)) in max_err.iter().zip(&min_err) {
        c.metric(&format!("relative_rms_{}", conv.name()), *e);
        c.metric(&format!("relative_rms_min_{}", conv.name()), *m);
    }
    let valid: Vec<Convention> = max_err.iter().filter(|e| e.1 < tol::LEVY_RELATIVE_RMS).map(|e| e.0).collect();
    let valid_min: Vec<Convention> = min_err.iter().filter(|e| e.1 < tol::LEVY_RELATIVE_RMS).map(|e| e.0).collect();
    let best = if max_err[0].1 <= max_err[1].1 { max_err[0].0 } else { max_err[1].0 };
    c.metric("validated_constant", if valid.len() == 1 { valid[0].constant() } else { f64::NAN });
    c.metric("best_constant", best.constant());
    let errs = format!(
        "quarter {:.4}, half {:.4}, bound {}",
        max_err[0].1,
        max_err[1].1,
        tol::LEVY_RELATIVE_RMS
    );
    c.check("unique convention", valid.len() == 1, errs);
    c.check(
        "min agrees",
        valid_min == valid,
        format!("quarter {:.4}, half {:.4}", min_err[0].1, min_err[1].1),
    );

    let (fine, fine_band) = shared_ensemble(s, seed, 1)?;
    let refined = levy_errors(&fine, s.ensemble_paths, &fine_band, false)?;
    let pick = |v: &[(Convention, f64)]| v.iter().find(|e| e.0 == best).map(|e| e.1).unwrap();
    let factor = ratio(pick(&max_err), pick(&refined));
    c.metric("refinement_factor", factor);
    c.check(
        "refinement",
        factor >= tol::REFINEMENT_FACTOR,
        format!("{} {:.4} -> {:.4}, factor {factor:.3}", best.name(), pick(&max_err), pick(&refined)),
    );

    let sanity = SimSpec::brownian(s.sanity_steps, mix(seed, 3))?;
    let maxima = map_ensemble(&sanity, s.sanity_paths, |_, p| Ok(RunningMax.evaluate(p)))?;
    let stats = MeanStats::of(&maxima);
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let z = stats.z_score(target);
    c.metric("sanity_mean_max", stats.mean);
    c.metric("sanity_z", z);
    c.check(
        "E max",
        z < tol::MC_STANDARD_ERRORS,
        format!("{:.4} vs {target:.4}, {z:.2} SE", stats.mean),
    );
    Ok(c)
}

fn mean_metric(spec: &SimSpec, n: usize, f: impl Fn(&Path) -> Result<f64> + Sync) -> Result<f64> {
    let xs = map_ensemble(spec, n, |_, p| f(p))?;
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

fn qv_local_time(s: &Sizes, seed: u64) -> Result<Criterion> {
    let mut c = Criterion::new(4);
    let gap = |steps: usize, b: BandConfig| -> Result<f64> {
        let spec = SimSpec::brownian(steps, mix(seed, 4))?;
        mean_metric(&spec, s.pathwise_paths, |p| Ok(qv_identity(p, &b)?.metrics["relative_gap"]))
    };
    let base = gap(s.ensemble_steps, band(0.02, 0.01))?;
    let refined = gap(4 * s.ensemble_steps, band(0.01, 0.005))?;
    let odd = gap(s.ensemble_steps, band(0.02, tol::INCOMMENSURATE_DY))?;
    let odd_refined = gap(4 * s.ensemble_steps, band(0.01, tol::INCOMMENSURATE_DY / 2.0))?;
    c.metric("relative_gap", base);
    c.metric("relative_gap_refined", refined);
    c.metric("relative_gap_incommensurate", odd);
    c.metric("relative_gap_incommensurate_refined", odd_refined);
    c.check(
        "gap",
        base < tol::LOCAL_TIME_RELATIVE_GAP,
        format!("{base:.2e} < {}", tol::LOCAL_TIME_RELATIVE_GAP),
    );
    let shrinks = base <= tol::FLOAT_FLOOR || ratio(base, refined) >= tol::REFINEMENT_FACTOR;
    c.check("refinement", shrinks, format!("{base:.2e} -> {refined:.2e}"));
    c.check(
        "incommensurate dy",
        odd < tol::LOCAL_TIME_RELATIVE_GAP,
        format!("dy {}: {odd:.2e} -> {odd_refined:.2e}", tol::INCOMMENSURATE_DY),
    );
    Ok(c)
}

fn occupation(s: &Sizes, seed: u64) -> Result<Criterion> {
    let mut c = Criterion::new(5);
    let spec = SimSpec::brownian(s.ensemble_steps, mix(seed, 5))?;
    let b = band(0.02, 0.01);
    let rows = map_ensemble(&spec, s.pathwise_paths, |_, p| {
        let r = check_occupation_running_integral(p, &b)?;
        let exact = r.residual.abs() / r.lhs.abs().max(r.rhs.abs()).max(f64::MIN_POSITIVE);
        let mut gaps = vec![exact, r.metrics["local_time_relative_gap"]];
        for psi in [Psi::One, Psi::Identity, Psi::Square] {
            gaps.push(check_occupation(psi, p, &b)?.metrics["relative_gap"]);
        }
        Ok(gaps)
    })?;
    let worst = |i: usize| rows.iter().map(|r| r[i]).fold(0.0, f64::max);
    c.metric("running_integral_exact_max", worst(0));
    c.metric("running_integral_local_time_max", worst(1));
    c.check(
        "summation by parts",
        worst(0) < tol::EXACT_RELATIVE,
        format!("max rel gap {:.2e}", worst(0)),
    );
    for (i, psi) in [Psi::One, Psi::Identity, Psi::Square].iter().enumerate() {
        let w = worst(i + 2);
        c.metric(&format!("local_time_max_gap_{}", psi.name()), w);
        c.check(
            &format!("psi={}", psi.name()),
            w < tol::LOCAL_TIME_RELATIVE_GAP,
            format!("max rel gap {w:.2e}"),
        );
    }
    Ok(c)
}

fn meyer_tanaka(s: &Sizes, seed: u64) -> Result<Criterion> {
    let mut c = Criterion::new(6);
    let (spec, b) = shared_ensemble(s, seed, 0)?;
    let rows = map_ensemble(&spec, s.ensemble_paths, |_, p| {
        let k = p.first();
        let classical = check_classical_tanaka(k, p, &b)?;
        let mt = check_meyer_tanaka(&AbsTerminalMinus::new(k), p, &MeyerTanaka::new(b))?;
        let mut tanaka_gap = (mt.residual - classical.residual).abs();
        for t in &classical.terms {
            tanaka_gap = tanaka_gap.max((mt.term(&t.name).unwrap_or(f64::NAN) - t.value).abs());
        }
        let shift = Path::new(*p.grid(), p.running_max_trace())?;
        let levy = check_levy_max(p, &b)?;
        let mt_max = check_meyer_tanaka(&RunningMax, p, &MeyerTanaka::new(b).with_shift(shift))?;
        let levy_gap = (mt_max.residual - levy.residual)
            .abs()
            .max((mt_max.term("local_time_term").unwrap() - levy.term("local_time_at_zero").unwrap()).abs());
        let doubles = mt.term("minus_double_stieltjes").unwrap().abs() + mt_max.term("minus_double_stieltjes").unwrap().abs();
        Ok((tanaka_gap, levy_gap, doubles))
    })?;
    let tanaka_gap = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let levy_gap = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let doubles = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    c.metric("tanaka_max_gap", tanaka_gap);
    c.metric("levy_max_gap", levy_gap);
    c.metric("double_stieltjes_max_abs", doubles);
    c.check("tanaka reproduced", tanaka_gap <= tol::ASSEMBLY_MATCH, format!("max gap {tanaka_gap:.2e}"));
    c.check("levy reproduced", levy_gap <= tol::ASSEMBLY_MATCH, format!("max gap {levy_gap:.2e}"));
    c.check("double stieltjes", doubles == 0.0, format!("max |term| {doubles:e}"));
    Ok(c)
}

fn max_martingales(s: &Sizes, seed: u64) -> Result<Criterion> {
    let mut c = Criterion::new(7);
    let h0 = 0.25;
    let spec = SimSpec::brownian(s.martingale_steps, mix(seed, 7))?;
    let samples = sample_checkpoints(&spec, s.martingale_paths, &[0.25, 0.5, 1.0])?;
    for psi in Psi::ALL {
        let f = MaxMartingale::new(psi, h0);
        let r = drift_test(psi.name(), &samples, |a, b| f.h(a, b), f.h(0.0, 0.0));
        let zmax = r.checkpoints.iter().map(|p| p.z).fold(0.0, f64::max);
        c.metric(&format!("drift_max_z_{}", psi.name()), zmax);
        c.check(&format!("drift psi={}", psi.name()), r.passed, format!("max {zmax:.2} SE"));
    }
    let control = drift_test("running_max", &samples, |_, b| b, 0.0);
    let zmin = control.checkpoints.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    c.metric("control_min_z", zmin);
    c.check(
        "control H=x2 rejected",
        zmin >= tol::MC_STANDARD_ERRORS,
        format!("min {zmin:.1} SE"),
    );

    let grid = ProbeGrid::default();
    let mut catalogue_ok = true;
    for psi in Psi::ALL {
        let f = MaxMartingale::new(psi, h0);
        catalogue_ok &= check_condition_h(psi.name(), |a, b| f.h(a, b), &grid).passed;
    }
    let neg_a = check_condition_h("x1^2", |a, _| a * a, &grid);
    let neg_b = check_condition_h("x2", |_, b| b, &grid);
    c.check(
        "H-conditions",
        catalogue_ok && !neg_a.passed && !neg_b.passed,
        format!("catalogue pass, negatives d11={:.2} d2={:.2}", neg_a.max_d11, neg_b.max_d2_diagonal),
    );

    let psi_spec = SimSpec::brownian(1000, mix(seed, 70))?;
    let errors = map_ensemble(&psi_spec, s.psi_paths, |j, p| {
        let f = MaxMartingale::new(Psi::ALL[j % Psi::ALL.len()], h0);
        Ok(recover_psi(&f, p)?.error)
    })?;
    let worst = errors.iter().copied().fold(0.0, f64::max);
    c.metric("psi_recovery_max_error", worst);
    c.check("recover psi", worst < tol::PSI_RECOVERY, format!("max error {worst:.2e}"));
    Ok(c)
}

fn mollification(s: &Sizes, seed: u64) -> Result<Criterion> {
    let mut c = Criterion::new(8);
    let kernel = Mollifier::default();
    let mass = GaussLegendre::new(DEFAULT_NODES).integrate(-1.0, 1.0, |u| kernel.eval(0, u).unwrap_or(f64::NAN));
    c.metric("kernel_mass_error", (mass - 1.0).abs());
    c.check(
        "normalization",
        (mass - 1.0).abs() < tol::KERNEL_NORMALIZATION,
        format!("|∫ρ - 1| = {:.1e}", (mass - 1.0).abs()),
    );

    let grid = TimeGrid::unit(64)?;
    let mut rng = NormalStream::new(mix(seed, 8));
    let bases: Vec<Arc<dyn Functional>> = vec![
        Arc::new(RunningMax),
        Arc::new(AbsTerminalMinus::new(0.1)),
        Arc::new(QuadraticVariation),
        Arc::new(PathIndependent::square()),
        Arc::new(MaxMartingale::new(Psi::Identity, 0.0)),
    ];
    let mut worst_deriv = 0.0f64;
    for base in &bases {
        for &n in &[2usize, 8, 32] {
            let fnn = mollify(base.clone(), n, DEFAULT_NODES)?;
            let path = random_path(&mut rng, &grid);
            // Steps well inside the support keep the differences smooth.
            let steps = default_steps(0.1 / n as f64, 4);
            let d1 = space_derivative_est(&fnn, &path, Side::Central, &steps)?.value;
            let d2 = second_space_derivative_est(&fnn, &path, &steps)?.value;
            let k1 = mollified_deriv(&fnn, 1, &path, 0.0)?;
            let k2 = mollified_deriv(&fnn, 2, &path, 0.0)?;
            worst_deriv = worst_deriv.max((d1 - k1).abs() / k1.abs().max(1.0));
            worst_deriv = worst_deriv.max((d2 - k2).abs() / k2.abs().max(1.0));
        }
    }
    c.metric("derivative_max_relative_gap", worst_deriv);
    c.check(
        "kernel derivatives",
        worst_deriv < tol::KERNEL_DERIVATIVE,
        format!("max rel gap {worst_deriv:.1e}"),
    );

    let n_list: Vec<usize> = (1..=8).map(|k| 1usize << k).collect();
    let at_max = Path::new(grid, vec![0.0, 0.3, 0.1, 0.5])?;
    let below_max = Path::new(grid, vec![0.0, 0.9, 0.1, 0.5])?;
    let cases: Vec<(&str, Arc<dyn Functional>, &Path)> = vec![
        ("running_max on S", Arc::new(RunningMax), &at_max),
        ("running_max off S", Arc::new(RunningMax), &below_max),
        ("abs at K", Arc::new(AbsTerminalMinus::new(0.5)), &at_max),
        ("abs off K", Arc::new(AbsTerminalMinus::new(0.1)), &below_max),
    ];
    let mut conv_ok = true;
    let mut worst_gap = 0.0f64;
    for (_, f, p) in &cases {
        let r = convergence_report(f.clone(), p, &n_list, DEFAULT_NODES)?;
        conv_ok &= r.passed;
        worst_gap = worst_gap.max(r.rows.last().map_or(f64::NAN, |row| row.gap_to_f.abs()));
    }
    c.metric("convergence_final_gap_max", worst_gap);
    c.check(
        "f_n -> f, monotone derivative",
        conv_ok,
        format!("n = 2..256, final gap {worst_gap:.1e}"),
    );

    let convex: Vec<Arc<dyn Functional>> = bases.iter().filter(|f| f.is_convex()).cloned().collect();
    let mut worst_excess = f64::NEG_INFINITY;
    for j in 0..s.convexity_triples {
        let f = &convex[j % convex.len()];
        let n = 1 + (rng.uniform() * 16.0) as usize;
        let fnn = mollify(f.clone(), n, DEFAULT_NODES)?;
        let path = random_path(&mut rng, &grid);
        let (h1, h2, lam) = (2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0, rng.uniform());
        let mid = eval_bumped(&fnn, &path, lam * h1 + (1.0 - lam) * h2);
        let chord = lam * eval_bumped(&fnn, &path, h1) + (1.0 - lam) * eval_bumped(&fnn, &path, h2);
        worst_excess = worst_excess.max((mid - chord) / chord.abs().max(1.0));
    }
    c.metric("convexity_max_excess", worst_excess);
    c.check(
        "convexity preserved",
        worst_excess <= tol::CONVEXITY_SLACK,
        format!("{} triples, max excess {worst_excess:.1e}", s.convexity_triples),
    );
    Ok(c)
}

/// Quick suite under 1 and 3 worker threads; the JSON must agree byte for
/// byte.
fn determinism(seed: u64) -> Result<Criterion> {
    let mut c = Criterion::new(9);
    let ids: Vec<u8> = (1..=8).collect();
    let mut outputs = Vec::new();
    for threads in [1usize, 3] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| argument(format!("thread pool: {e}")))?;
        let report = pool.install(|| run_suite(Scale::Quick, seed, &ids))?;
        outputs.push(serde_json::to_string(&report)?);
    }
    let same = outputs[0] == outputs[1];
    c.metric("json_bytes", outputs[0].len() as f64);
    c.check("threads 1 vs 3", same, format!("{} bytes of quick-suite JSON", outputs[0].len()));
    Ok(c)
}
