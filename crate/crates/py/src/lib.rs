//! Python module `pathcalc`: simulation, functionals and the pathwise
//! identity checks, on paths passed as lists of floats over a uniform grid
//! on `[0, horizon]`.

use pyo3::exceptions::{PyNotImplementedError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pathcalc::functionals::{from_name, Functional, Psi};
use pathcalc::localtime::Convention;
use pathcalc::mollify::{mollified_deriv, mollify};
use pathcalc::paths::{Path, TimeGrid};
use pathcalc::simulate::{simulate_ensemble, ProcessKind, SimSpec};
use pathcalc::suite::{run_criterion, Scale};
use pathcalc::verify::{self, BandConfig, MeyerTanaka, VerificationReport};

fn py_err(e: pathcalc::Error) -> PyErr {
    use pathcalc::Error::*;
    match e {
        Unsupported(_) => PyNotImplementedError::new_err(e.to_string()),
        Domain(_) | Argument(_) | Convention(_) | Format(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for pathcalc::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn path(values: Vec<f64>, horizon: f64) -> PyResult<Path> {
    if values.len() < 2 {
        return Err(PyValueError::new_err("a path needs at least two values"));
    }
    let grid = TimeGrid::new(horizon, values.len() - 1).py()?;
    Path::new(grid, values).py()
}

fn band(epsilon: f64, dy: Option<f64>, convention: &str) -> PyResult<BandConfig> {
    let convention: Convention = convention.parse().py()?;
    Ok(BandConfig::new(epsilon, dy.unwrap_or(epsilon / 2.0)).py()?.with_convention(convention))
}

fn functional(name: &str, k: f64, psi: &str, h0: f64) -> PyResult<std::sync::Arc<dyn Functional>> {
    let psi: Psi = psi.parse().py()?;
    from_name(name, k, psi, h0).py()
}

fn report_dict<'py>(py: Python<'py>, r: &VerificationReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("identity", &r.identity)?;
    d.set_item("lhs", r.lhs)?;
    d.set_item("rhs", r.rhs)?;
    d.set_item("residual", r.residual)?;
    let terms = PyDict::new(py);
    for t in &r.terms {
        terms.set_item(&t.name, t.value)?;
    }
    d.set_item("terms", terms)?;
    let metrics = PyDict::new(py);
    for (k, v) in &r.metrics {
        metrics.set_item(k, *v)?;
    }
    d.set_item("metrics", metrics)?;
    if let Some(a) = &r.compensator {
        d.set_item("compensator", a.clone())?;
    }
    if let Some(p) = r.passed {
        d.set_item("passed", p)?;
    }
    Ok(d)
}

/// Seeded paths; path `j` uses the derived seed of member `j`.
#[pyfunction]
#[pyo3(signature = (steps, seed, paths=1, x0=0.0, sigma=1.0, mu=0.0, horizon=1.0, kind="brownian"))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    steps: usize,
    seed: u64,
    paths: usize,
    x0: f64,
    sigma: f64,
    mu: f64,
    horizon: f64,
    kind: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let kind: ProcessKind = kind.parse().py()?;
    let spec = SimSpec { kind, x0, sigma, mu, grid: TimeGrid::new(horizon, steps).py()?, seed };
    Ok(simulate_ensemble(&spec, paths).py()?.into_iter().map(|p| p.values().to_vec()).collect())
}

#[pyfunction]
#[pyo3(signature = (name, values, horizon=1.0, K=0.0, psi="one", H0=0.0))]
#[allow(non_snake_case)]
fn evaluate(name: &str, values: Vec<f64>, horizon: f64, K: f64, psi: &str, H0: f64) -> PyResult<f64> {
    Ok(functional(name, K, psi, H0)?.evaluate(&path(values, horizon)?))
}

/// `∂_h^k F_n(Y, h)` of the mollified functional.
#[pyfunction]
#[pyo3(signature = (name, values, n, k=0, h=0.0, horizon=1.0, K=0.0, nodes=64))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn mollified(name: &str, values: Vec<f64>, n: usize, k: usize, h: f64, horizon: f64, K: f64, nodes: usize) -> PyResult<f64> {
    let fnn = mollify(functional(name, K, "one", 0.0)?, n, nodes).py()?;
    mollified_deriv(&fnn, k, &path(values, horizon)?, h).py()
}

#[pyfunction]
#[pyo3(signature = (a, b, horizon=1.0))]
fn lambda_distance(a: Vec<f64>, b: Vec<f64>, horizon: f64) -> PyResult<f64> {
    let steps = a.len().max(b.len()) - 1;
    let grid = TimeGrid::new(horizon, steps).py()?;
    pathcalc::paths::lambda_distance(&Path::new(grid, a).py()?, &Path::new(grid, b).py()?).py()
}

#[pyfunction]
#[pyo3(signature = (name, values, horizon=1.0, K=0.0, psi="one", H0=0.0))]
#[allow(non_snake_case)]
fn ito<'py>(py: Python<'py>, name: &str, values: Vec<f64>, horizon: f64, K: f64, psi: &str, H0: f64) -> PyResult<Bound<'py, PyDict>> {
    let f = functional(name, K, psi, H0)?;
    report_dict(py, &verify::check_functional_ito(f.as_ref(), &path(values, horizon)?).py()?)
}

#[pyfunction]
#[pyo3(signature = (values, K, epsilon, dy=None, horizon=1.0))]
#[allow(non_snake_case)]
fn tanaka<'py>(py: Python<'py>, values: Vec<f64>, K: f64, epsilon: f64, dy: Option<f64>, horizon: f64) -> PyResult<Bound<'py, PyDict>> {
    let b = band(epsilon, dy, "quarter")?;
    report_dict(py, &verify::check_classical_tanaka(K, &path(values, horizon)?, &b).py()?)
}

#[pyfunction]
#[pyo3(signature = (values, epsilon, dy=None, convention="quarter", minimum=false, horizon=1.0))]
fn levy<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    epsilon: f64,
    dy: Option<f64>,
    convention: &str,
    minimum: bool,
    horizon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let b = band(epsilon, dy, convention)?;
    let p = path(values, horizon)?;
    let r = if minimum { verify::check_levy_min(&p, &b) } else { verify::check_levy_max(&p, &b) };
    report_dict(py, &r.py()?)
}

#[pyfunction]
#[pyo3(signature = (values, epsilon, dy=None, horizon=1.0))]
fn qv_identity<'py>(py: Python<'py>, values: Vec<f64>, epsilon: f64, dy: Option<f64>, horizon: f64) -> PyResult<Bound<'py, PyDict>> {
    let b = band(epsilon, dy, "quarter")?;
    report_dict(py, &verify::qv_identity(&path(values, horizon)?, &b).py()?)
}

#[pyfunction]
#[pyo3(signature = (psi, values, epsilon, dy=None, horizon=1.0))]
fn occupation<'py>(py: Python<'py>, psi: &str, values: Vec<f64>, epsilon: f64, dy: Option<f64>, horizon: f64) -> PyResult<Bound<'py, PyDict>> {
    let b = band(epsilon, dy, "quarter")?;
    let psi: Psi = psi.parse().py()?;
    report_dict(py, &verify::check_occupation(psi, &path(values, horizon)?, &b).py()?)
}

/// `shift_running_max` takes local time of `x - m̄` and evaluates the
/// integrators at `y + m̄`.
#[pyfunction]
#[pyo3(signature = (name, values, epsilon, dy=None, K=0.0, shift_running_max=false, compensator=false, horizon=1.0))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn meyer_tanaka<'py>(
    py: Python<'py>,
    name: &str,
    values: Vec<f64>,
    epsilon: f64,
    dy: Option<f64>,
    K: f64,
    shift_running_max: bool,
    compensator: bool,
    horizon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let f = functional(name, K, "one", 0.0)?;
    let p = path(values, horizon)?;
    let mut opts = MeyerTanaka::new(band(epsilon, dy, "quarter")?);
    if shift_running_max {
        opts = opts.with_shift(Path::new(*p.grid(), p.running_max_trace()).py()?);
    }
    opts.compensator = compensator;
    report_dict(py, &verify::check_meyer_tanaka(f.as_ref(), &p, &opts).py()?)
}

/// One acceptance criterion: `(passed, summary line)`.
#[pyfunction]
#[pyo3(signature = (id, seed, scale="quick"))]
fn criterion(py: Python<'_>, id: u8, seed: u64, scale: &str) -> PyResult<(bool, String)> {
    let scale: Scale = scale.parse().py()?;
    let c = py.detach(|| run_criterion(id, scale, seed)).py()?;
    Ok((c.passed, c.line()))
}

#[pymodule]
#[pyo3(name = "pathcalc")]
fn pathcalc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("GENERATOR", pathcalc::simulate::GENERATOR)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mollified, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_distance, m)?)?;
    m.add_function(wrap_pyfunction!(ito, m)?)?;
    m.add_function(wrap_pyfunction!(tanaka, m)?)?;
    m.add_function(wrap_pyfunction!(levy, m)?)?;
    m.add_function(wrap_pyfunction!(qv_identity, m)?)?;
    m.add_function(wrap_pyfunction!(occupation, m)?)?;
    m.add_function(wrap_pyfunction!(meyer_tanaka, m)?)?;
    m.add_function(wrap_pyfunction!(criterion, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_paths_are_rejected() {
        assert!(path(vec![0.0], 1.0).is_err());
        assert_eq!(path(vec![0.0, 0.5, -0.25], 2.0).unwrap().end_index(), 2);
    }

    #[test]
    fn band_defaults_dy_to_half_epsilon() {
        assert!(band(0.1, None, "quarter").is_ok());
        assert!(band(0.1, None, "third").is_err());
    }
}
