//! Python bindings. Functions take `.plf` text and coordinate lists and return
//! plain Python values (reports come back as dicts).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;
use subdiff_lab as core;
use subdiff_lab::{BoxRegion, GridSpec, PLFunction, Point};

fn err(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn func(text: &str) -> PyResult<PLFunction> {
    core::parse_function(text).map_err(err)
}

fn point(c: Vec<f64>) -> PyResult<Point> {
    Point::new(&c).map_err(err)
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn region_of(f: &PLFunction, region: Option<&str>) -> PyResult<BoxRegion> {
    match (region, f.domain()) {
        (Some(r), _) => core::parse_box(r).map_err(err),
        (None, Some(d)) => Ok(*d),
        (None, None) => BoxRegion::cube(f.dim(), -2.0, 2.0).map_err(err),
    }
}

fn grid_of(f: &PLFunction, region: Option<&str>, h: Option<f64>) -> PyResult<GridSpec> {
    let r = region_of(f, region)?;
    match h {
        Some(h) => GridSpec::new(h, r).map_err(err),
        None => Ok(GridSpec::default_for(r)),
    }
}

/// Canonical text of a parsed function.
#[pyfunction]
fn normalize(text: &str) -> PyResult<String> {
    Ok(core::format(&func(text)?))
}

/// f(x); `inf` outside the domain.
#[pyfunction]
fn evaluate(f: &str, x: Vec<f64>) -> PyResult<f64> {
    Ok(func(f)?.evaluate(&point(x)?).map_err(err)?.to_f64())
}

#[pyfunction]
fn directional_derivative(f: &str, x: Vec<f64>, d: Vec<f64>) -> PyResult<f64> {
    Ok(core::directional_derivative(&func(f)?, &point(x)?, &point(d)?).map_err(err)?.to_f64())
}

/// Vertices of the subdifferential.
#[pyfunction]
fn subdifferential(f: &str, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let p = core::subdifferential(&func(f)?, &point(x)?).map_err(err)?.canonical();
    Ok(p.vertices().iter().map(|v| v.coords().to_vec()).collect())
}

#[pyfunction]
#[pyo3(signature = (f, x, eps, region=None, h=None))]
fn eps_enlargement<'py>(
    py: Python<'py>,
    f: &str,
    x: Vec<f64>,
    eps: f64,
    region: Option<&str>,
    h: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let f = func(f)?;
    let s = core::eps_enlargement(&f, &point(x)?, eps, &grid_of(&f, region, h)?).map_err(err)?;
    to_py(py, &s)
}

#[pyfunction]
#[pyo3(signature = (f, x, d, schedule=None, region=None, h=None))]
fn verify_link<'py>(
    py: Python<'py>,
    f: &str,
    x: Vec<f64>,
    d: Vec<f64>,
    schedule: Option<Vec<f64>>,
    region: Option<&str>,
    h: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let f = func(f)?;
    let schedule = schedule.unwrap_or_else(core::default_schedule);
    let r = core::verify_link(&f, &point(x)?, &point(d)?, &schedule, &grid_of(&f, region, h)?).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn ekeland_point<'py>(py: Python<'py>, f: &str, xbar: Vec<f64>, eps: f64, lam: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &core::ekeland_point(&func(f)?, &point(xbar)?, eps, lam).map_err(err)?)
}

#[pyfunction]
fn mean_value_witness<'py>(py: Python<'py>, f: &str, x: Vec<f64>, xbar: Vec<f64>, lam: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &core::mean_value_witness(&func(f)?, &point(x)?, &point(xbar)?, lam).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (f, xbar, region=None, h=None))]
fn directional_test<'py>(
    py: Python<'py>,
    f: &str,
    xbar: Vec<f64>,
    region: Option<&str>,
    h: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let f = func(f)?;
    let g = grid_of(&f, region, h)?;
    to_py(py, &core::directional_test(&f, &g.region, &point(xbar)?, &g).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (f, xbar, region=None, h=None))]
fn subdiff_test<'py>(
    py: Python<'py>,
    f: &str,
    xbar: Vec<f64>,
    region: Option<&str>,
    h: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let f = func(f)?;
    let g = grid_of(&f, region, h)?;
    to_py(py, &core::subdiff_test(&f, &g.region, &point(xbar)?, &g).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (f, xbar, region=None, h=None))]
fn refute_optimality<'py>(
    py: Python<'py>,
    f: &str,
    xbar: Vec<f64>,
    region: Option<&str>,
    h: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let f = func(f)?;
    let g = grid_of(&f, region, h)?;
    to_py(py, &core::refute_optimality(&f, &g.region, &point(xbar)?, &g).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (f, h=None, tol=None))]
fn check_absorbing<'py>(py: Python<'py>, f: &str, h: Option<f64>, tol: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let f = func(f)?;
    let g = grid_of(&f, None, h)?;
    let tol = tol.unwrap_or(2.0 * g.h * f.lipschitz());
    let dual = core::dual_grid_for(&f, g.h).map_err(err)?;
    to_py(py, &core::check_absorbing(&f, &g, &dual, tol).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (f, h=None, tol=1e-9))]
fn check_maximal_monotone(f: &str, h: Option<f64>, tol: f64) -> PyResult<bool> {
    let f = func(f)?;
    let g = grid_of(&f, None, h)?;
    let dual = core::dual_grid_for(&f, g.h).map_err(err)?;
    core::check_maximal_monotone(&f, &g, &dual, tol).map_err(err)
}

/// Canonical text of a seeded random instance.
#[pyfunction]
fn generate_instance(seed: u64, dim: usize, convex: bool, pieces: usize) -> PyResult<String> {
    Ok(core::format(&core::generate_instance(seed, dim, convex, pieces).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (seed=42, quick=true))]
fn run_suite<'py>(py: Python<'py>, seed: u64, quick: bool) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = if quick { core::SuiteConfig::quick() } else { core::SuiteConfig::default() };
    cfg.seed = seed;
    let report = py.detach(|| core::run_suite(&cfg));
    to_py(py, &report)
}

#[pymodule(name = "subdiff_lab")]
fn subdiff_lab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(directional_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(subdifferential, m)?)?;
    m.add_function(wrap_pyfunction!(eps_enlargement, m)?)?;
    m.add_function(wrap_pyfunction!(verify_link, m)?)?;
    m.add_function(wrap_pyfunction!(ekeland_point, m)?)?;
    m.add_function(wrap_pyfunction!(mean_value_witness, m)?)?;
    m.add_function(wrap_pyfunction!(directional_test, m)?)?;
    m.add_function(wrap_pyfunction!(subdiff_test, m)?)?;
    m.add_function(wrap_pyfunction!(refute_optimality, m)?)?;
    m.add_function(wrap_pyfunction!(check_absorbing, m)?)?;
    m.add_function(wrap_pyfunction!(check_maximal_monotone, m)?)?;
    m.add_function(wrap_pyfunction!(generate_instance, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
