use std::fs::File;

use serde::Serialize;
use serde_json::{json, Value};

use pathcalc::functionals::{from_name, MaxMartingale, Psi, RunningMax};
use pathcalc::functionals::Functional;
use pathcalc::mollify::convergence_report;
use pathcalc::paths::Path;
use pathcalc::simulate::{map_ensemble, simulate_ensemble, simulate_path, GENERATOR};
use pathcalc::suite::{run_criterion, tolerances as tol, SuiteReport};
use pathcalc::verify::{
    check_classical_tanaka, check_condition_h, check_functional_ito, check_levy_max, check_levy_min,
    check_max_martingale, check_meyer_tanaka, check_occupation, check_occupation_running_integral, qv_identity,
    recover_psi, EnsembleReport, MeanStats, MeyerTanaka, ProbeGrid, VerificationReport, SCHEMA_VERSION,
};

use crate::config::{RunConfig, Shift};
use crate::Failure;

/// What a command hands back for emission.
pub struct Outcome {
    pub report: Value,
    pub csv: Vec<u8>,
    pub passed: bool,
}

type Res<T> = Result<T, Failure>;

pub(crate) fn dispatch(cfg: &RunConfig) -> Res<Outcome> {
    match cfg.command.as_str() {
        "simulate" => simulate(cfg),
        "ito" => ito(cfg),
        "tanaka" => tanaka(cfg),
        "levy" => levy(cfg, false),
        "levy-min" => levy(cfg, true),
        "meyer-tanaka" => meyer_tanaka(cfg),
        "occupation" => occupation(cfg),
        "qv-identity" => qv(cfg),
        "maxmart" => maxmart(cfg),
        "condition-h" => condition_h(cfg),
        "recover-psi" => recover(cfg),
        "mollify-report" => mollify_report(cfg),
        "all" => all(cfg),
        other => unreachable!("unknown command {other}"),
    }
}

fn functional(cfg: &RunConfig) -> Res<std::sync::Arc<dyn Functional>> {
    let name = cfg.require_functional()?;
    Ok(from_name(name, cfg.k.unwrap_or(0.0), cfg.psi.unwrap_or(Psi::One), cfg.h0)?)
}

fn csv_rows<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Res<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(pathcalc::Error::from)?;
    }
    w.into_inner().map_err(|e| Failure::Run(e.into_error().into()))
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n.max(1) as f64).sqrt()
}

fn pathwise<F>(cfg: &RunConfig, check: F) -> Res<Vec<VerificationReport>>
where
    F: Fn(&Path) -> pathcalc::Result<VerificationReport> + Sync,
{
    let spec = cfg.sim_spec()?;
    Ok(map_ensemble(&spec, cfg.paths, |_, p| check(p))?)
}

/// One path: the full term breakdown. Several: the ensemble summary.
fn emit(cfg: &RunConfig, identity: &str, mut reports: Vec<VerificationReport>, passed: bool, metrics: &[(&str, f64)]) -> Res<Outcome> {
    if reports.len() == 1 {
        let mut r = reports.pop().expect("one report");
        r.passed = Some(passed);
        for (k, v) in metrics {
            r.metrics.insert(k.to_string(), *v);
        }
        let mut csv = Vec::new();
        r.write_csv(&mut csv)?;
        return Ok(Outcome { report: serde_json::to_value(&r)?, csv, passed });
    }
    let mut e = EnsembleReport::from_reports(identity, &reports)
        .with_config("N", cfg.steps)
        .with_config("T", cfg.horizon)
        .with_config("seed", cfg.seed)
        .with_config("paths", cfg.paths);
    for (k, v) in metrics {
        e = e.with_metric(k, *v);
    }
    e.passed = Some(passed);
    let mut csv = Vec::new();
    e.write_csv(&mut csv)?;
    Ok(Outcome { report: serde_json::to_value(&e)?, csv, passed })
}

fn simulate(cfg: &RunConfig) -> Res<Outcome> {
    let spec = cfg.sim_spec()?;
    let paths = simulate_ensemble(&spec, cfg.paths)?;
    if let Some(dir) = &cfg.dump {
        std::fs::create_dir_all(dir)?;
        for (j, p) in paths.iter().enumerate() {
            p.write_csv(File::create(dir.join(format!("path_{j:05}.csv")))?)?;
        }
    }
    let ends: Vec<f64> = paths.iter().map(|p| p.last()).collect();
    let maxima: Vec<f64> = paths.iter().map(|p| RunningMax.evaluate(p)).collect();
    let report = json!({
        "identity": "simulate",
        "generator": GENERATOR,
        "n_paths": paths.len(),
        "terminal": MeanStats::of(&ends),
        "running_max": MeanStats::of(&maxima),
    });
    let csv = if paths.len() == 1 {
        let mut buf = Vec::new();
        paths[0].write_csv(&mut buf)?;
        buf
    } else {
        #[derive(Serialize)]
        struct Row {
            path: usize,
            x_t: f64,
            max: f64,
        }
        csv_rows(ends.iter().zip(&maxima).enumerate().map(|(path, (&x_t, &max))| Row { path, x_t, max }))?
    };
    Ok(Outcome { report, csv, passed: true })
}

fn ito(cfg: &RunConfig) -> Res<Outcome> {
    let f = functional(cfg)?;
    let reports = pathwise(cfg, |p| check_functional_ito(f.as_ref(), p))?;
    let bound = cfg.tol.unwrap_or(10.0 * (cfg.horizon / cfg.steps as f64).sqrt());
    let r = rms(reports.iter().map(|r| r.residual));
    emit(cfg, &format!("functional_ito[{}]", f.name()), reports, r < bound, &[("rms_residual", r), ("bound", bound)])
}

fn tanaka(cfg: &RunConfig) -> Res<Outcome> {
    let k = cfg.require_k()?;
    let band = cfg.band()?;
    let reports = pathwise(cfg, |p| check_classical_tanaka(k, p, &band))?;
    let bound = cfg.tol.unwrap_or(tol::TANAKA_RMS);
    let r = rms(reports.iter().map(|r| r.residual));
    emit(cfg, "classical_tanaka", reports, r < bound, &[("rms_residual", r), ("bound", bound)])
}

fn levy(cfg: &RunConfig, min: bool) -> Res<Outcome> {
    let band = cfg.band()?;
    let reports = pathwise(cfg, |p| if min { check_levy_min(p, &band) } else { check_levy_max(p, &band) })?;
    let bound = cfg.tol.unwrap_or(tol::LEVY_RELATIVE_RMS);
    let rel = rms(reports.iter().map(|r| r.residual)) / rms(reports.iter().map(|r| r.lhs)).max(tol::FLOAT_FLOOR);
    let identity = if min { "levy_min" } else { "levy_max" };
    emit(cfg, identity, reports, rel < bound, &[("relative_rms", rel), ("bound", bound)])
}

fn meyer_tanaka(cfg: &RunConfig) -> Res<Outcome> {
    let f = functional(cfg)?;
    let mut opts = MeyerTanaka::new(cfg.band()?);
    opts.compensator = cfg.compensator;
    let reports = pathwise(cfg, |p| {
        let opts = match cfg.shift {
            Shift::None => opts.clone(),
            Shift::RunningMax => opts.clone().with_shift(Path::new(*p.grid(), p.running_max_trace())?),
        };
        check_meyer_tanaka(f.as_ref(), p, &opts)
    })?;
    let bound = cfg.tol.unwrap_or(tol::TANAKA_RMS);
    let r = rms(reports.iter().map(|r| r.residual));
    emit(cfg, &format!("meyer_tanaka[{}]", f.name()), reports, r < bound, &[("rms_residual", r), ("bound", bound)])
}

fn qv(cfg: &RunConfig) -> Res<Outcome> {
    let band = cfg.band()?;
    let reports = pathwise(cfg, |p| qv_identity(p, &band))?;
    let bound = cfg.tol.unwrap_or(tol::LOCAL_TIME_RELATIVE_GAP);
    let worst = reports.iter().map(|r| r.metrics["relative_gap"]).fold(0.0, f64::max);
    emit(cfg, "qv_identity", reports, worst < bound, &[("max_relative_gap", worst), ("bound", bound)])
}

fn occupation(cfg: &RunConfig) -> Res<Outcome> {
    #[derive(Serialize)]
    struct Row<'a> {
        psi: &'a str,
        path: usize,
        lhs: f64,
        rhs: f64,
        rel_gap: f64,
    }
    let band = cfg.band()?;
    let bound = cfg.tol.unwrap_or(tol::LOCAL_TIME_RELATIVE_GAP);
    let mut names: Vec<String> = cfg.psi_list().iter().map(|p| p.name().to_string()).collect();
    let mut per_psi: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    for psi in cfg.psi_list() {
        let reports = pathwise(cfg, |p| check_occupation(psi, p, &band))?;
        per_psi.push(reports.iter().map(|r| (r.lhs, r.rhs, r.metrics["relative_gap"])).collect());
    }
    if cfg.psi.is_none() {
        names.push("s*y".into());
        let reports = pathwise(cfg, |p| check_occupation_running_integral(p, &band))?;
        per_psi.push(
            reports
                .iter()
                .map(|r| (r.lhs, r.metrics["local_time_form"], r.metrics["local_time_relative_gap"]))
                .collect(),
        );
    }
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut passed = true;
    for (name, rs) in names.iter().zip(&per_psi) {
        let mean_gap = rs.iter().map(|r| r.2).sum::<f64>() / rs.len() as f64;
        let ok = mean_gap < bound;
        passed &= ok;
        checks.push(json!({ "psi": name, "mean_relative_gap": mean_gap, "passed": ok }));
        rows.extend(rs.iter().enumerate().map(|(path, r)| Row { psi: name, path, lhs: r.0, rhs: r.1, rel_gap: r.2 }));
    }
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "identity": "occupation",
        "bound": bound,
        "checks": checks,
        "passed": passed,
    });
    Ok(Outcome { report, csv: csv_rows(rows)?, passed })
}

fn maxmart(cfg: &RunConfig) -> Res<Outcome> {
    #[derive(Serialize)]
    struct Row<'a> {
        identity: &'a str,
        t: f64,
        mean: f64,
        se: f64,
        z: f64,
        passed: bool,
    }
    let spec = cfg.sim_spec()?;
    let reports = cfg
        .psi_list()
        .into_iter()
        .map(|psi| check_max_martingale(psi, cfg.h0, &spec, cfg.paths, &cfg.checkpoints))
        .collect::<pathcalc::Result<Vec<_>>>()?;
    let passed = reports.iter().all(|r| r.passed);
    let csv = csv_rows(reports.iter().flat_map(|r| {
        r.checkpoints.iter().map(|c| Row { identity: &r.identity, t: c.t, mean: c.mean, se: c.se, z: c.z, passed: c.passed })
    }))?;
    let report = json!({ "schema_version": SCHEMA_VERSION, "identity": "max_martingale", "reports": reports, "passed": passed });
    Ok(Outcome { report, csv, passed })
}

fn condition_h(cfg: &RunConfig) -> Res<Outcome> {
    let grid = ProbeGrid::default();
    let reports: Vec<_> = cfg
        .psi_list()
        .into_iter()
        .map(|psi| {
            let f = MaxMartingale::new(psi, cfg.h0);
            check_condition_h(&format!("H[{}]", psi.name()), |a, b| f.h(a, b), &grid)
        })
        .collect();
    let passed = reports.iter().all(|r| r.passed);
    let csv = csv_rows(&reports)?;
    let report = json!({ "schema_version": SCHEMA_VERSION, "identity": "condition_h", "grid": grid, "reports": reports, "passed": passed });
    Ok(Outcome { report, csv, passed })
}

fn recover(cfg: &RunConfig) -> Res<Outcome> {
    #[derive(Serialize)]
    struct Row {
        psi: &'static str,
        path: usize,
        recovered: f64,
        expected: f64,
        residual: f64,
        error: f64,
        passed: bool,
    }
    let spec = cfg.sim_spec()?;
    let mut rows = Vec::new();
    for psi in cfg.psi_list() {
        let f = MaxMartingale::new(psi, cfg.h0);
        let found = map_ensemble(&spec, cfg.paths, |_, p| recover_psi(&f, p))?;
        rows.extend(found.into_iter().enumerate().map(|(path, r)| Row {
            psi: psi.name(),
            path,
            recovered: r.recovered,
            expected: r.expected,
            residual: r.residual,
            error: r.error,
            passed: match cfg.tol {
                Some(t) => r.error <= t,
                None => r.passed,
            },
        }));
    }
    let passed = rows.iter().all(|r| r.passed);
    let max_error = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "identity": "recover_psi",
        "max_error": max_error,
        "rows": rows,
        "passed": passed,
    });
    Ok(Outcome { report, csv: csv_rows(&rows)?, passed })
}

fn mollify_report(cfg: &RunConfig) -> Res<Outcome> {
    let f = functional(cfg)?;
    let path = simulate_path(&cfg.sim_spec()?)?;
    let r = convergence_report(f, &path, &cfg.n_list, cfg.nodes)?;
    let mut csv = Vec::new();
    r.write_csv(&mut csv)?;
    Ok(Outcome { report: serde_json::to_value(&r)?, csv, passed: r.passed })
}

/// Criterion lines go to stderr as they finish.
fn all(cfg: &RunConfig) -> Res<Outcome> {
    #[derive(Serialize)]
    struct Row<'a> {
        id: u8,
        name: &'a str,
        passed: bool,
        summary: &'a str,
    }
    let mut criteria = Vec::new();
    for &id in &cfg.criteria {
        let c = run_criterion(id, cfg.scale, cfg.seed)?;
        eprintln!("{}", c.line());
        criteria.push(c);
    }
    let suite = SuiteReport {
        schema_version: SCHEMA_VERSION,
        scale: cfg.scale,
        seed: cfg.seed,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    };
    let csv = csv_rows(suite.criteria.iter().map(|c| Row { id: c.id, name: &c.name, passed: c.passed, summary: &c.summary }))?;
    Ok(Outcome { report: serde_json::to_value(&suite)?, csv, passed: suite.passed })
}
