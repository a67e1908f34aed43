//! Python bindings: panels travel as lists of rows (`T` lists of `m` floats).

use std::collections::BTreeMap;

use ::gdpc::bench::run_replication as bench_replication;
use ::gdpc::gdpc::reconstruct;
use ::gdpc::{Error, GdpcOptions, Method, PanelMatrix, ScenarioName};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn to_py(err: Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn panel(rows: Vec<Vec<f64>>) -> PyResult<PanelMatrix> {
    PanelMatrix::from_rows(&rows).map_err(to_py)
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// First generalized dynamic principal component.
#[pyclass(name = "GdpcFit", module = "gdpc_py", frozen)]
struct PyGdpcFit {
    inner: ::gdpc::GdpcFit,
}

#[pymethods]
impl PyGdpcFit {
    /// Factor path of length `T + k`; the first `k` entries are pre-sample.
    #[getter]
    fn f(&self) -> Vec<f64> {
        self.inner.f.iter().copied().collect()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.iter().copied().collect()
    }

    /// Loadings as `k + 1` rows of length `m`.
    #[getter]
    fn beta(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.beta)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn mse(&self) -> f64 {
        self.inner.mse
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn mse_history(&self) -> Vec<f64> {
        self.inner.mse_history.clone()
    }

    /// Fitted panel `alpha_j + sum_h beta[h, j] f[t - h]`.
    fn reconstruct(&self) -> Vec<Vec<f64>> {
        rows(&reconstruct(&self.inner))
    }

    fn __repr__(&self) -> String {
        format!(
            "GdpcFit(T={}, m={}, k={}, mse={:.6e}, iterations={}, converged={})",
            self.inner.t(),
            self.inner.m(),
            self.inner.k,
            self.inner.mse,
            self.inner.iterations,
            self.inner.converged
        )
    }
}

/// Common-part estimate of one of the baseline estimators.
#[pyclass(name = "CommonPartEstimate", module = "gdpc_py", frozen)]
struct PyCommonPart {
    inner: ::gdpc::CommonPartEstimate,
}

#[pymethods]
impl PyCommonPart {
    #[getter]
    fn chi_hat(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.chi_hat)
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r
    }

    #[getter]
    fn diagnostics(&self) -> BTreeMap<String, Vec<f64>> {
        self.inner.diagnostics.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "CommonPartEstimate(method={}, r={}, shape=({}, {}))",
            self.inner.method,
            self.inner.r,
            self.inner.chi_hat.nrows(),
            self.inner.chi_hat.ncols()
        )
    }
}

/// A panel drawn from one of the simulation designs.
#[pyclass(name = "SimulatedPanel", module = "gdpc_py", frozen)]
struct PySimulatedPanel {
    inner: ::gdpc::SimulatedPanel,
}

#[pymethods]
impl PySimulatedPanel {
    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        self.inner.z.to_rows()
    }

    #[getter]
    fn chi(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.chi)
    }

    #[getter]
    fn e(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.e)
    }

    #[getter]
    fn f(&self) -> Vec<f64> {
        self.inner.f.iter().copied().collect()
    }

    #[getter]
    fn beta(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.beta)
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }
}

#[pyfunction]
#[pyo3(signature = (z, k, tol = 1e-6, max_iter = 500))]
fn fit_gdpc(py: Python<'_>, z: Vec<Vec<f64>>, k: usize, tol: f64, max_iter: usize) -> PyResult<PyGdpcFit> {
    let z = panel(z)?;
    let opts = GdpcOptions {
        tol,
        max_iter,
        ..Default::default()
    };
    let inner = py.detach(|| ::gdpc::fit_gdpc(&z, k, &opts)).map_err(to_py)?;
    Ok(PyGdpcFit { inner })
}

#[pyfunction]
fn fit_sw(py: Python<'_>, z: Vec<Vec<f64>>, r: usize) -> PyResult<PyCommonPart> {
    let z = panel(z)?;
    let inner = py.detach(|| ::gdpc::fit_sw(&z, r)).map_err(to_py)?;
    Ok(PyCommonPart { inner })
}

#[pyfunction]
fn fit_fhlr(py: Python<'_>, z: Vec<Vec<f64>>, q: usize, r: usize) -> PyResult<PyCommonPart> {
    let z = panel(z)?;
    let inner = py.detach(|| ::gdpc::fit_fhlr(&z, q, r)).map_err(to_py)?;
    Ok(PyCommonPart { inner })
}

#[pyfunction]
fn simulate(scenario: &str, t: usize, m: usize, seed: u64) -> PyResult<PySimulatedPanel> {
    let name: ScenarioName = scenario.parse().map_err(to_py)?;
    let inner = ::gdpc::simulate(name.scenario(), t, m, seed).map_err(to_py)?;
    Ok(PySimulatedPanel { inner })
}

/// Normalized error `||a - b||_F^2 / ||a||_F^2`.
#[pyfunction]
fn relative_frobenius_error(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    let (a, b) = (panel(a)?, panel(b)?);
    ::gdpc::relative_frobenius_error(a.values(), b.values()).map_err(to_py)
}

/// Lag-`u` sample autocovariance of the column-centered panel.
#[pyfunction]
fn autocovariance(z: Vec<Vec<f64>>, u: i64) -> PyResult<Vec<Vec<f64>>> {
    let z = panel(z)?;
    ::gdpc::autocovariance(&z, u).map(|g| rows(&g)).map_err(to_py)
}

/// Normalized common-part error of each method on one seeded replication.
#[pyfunction]
#[pyo3(signature = (scenario, t, m, rep_index, base_seed, methods = None))]
fn run_replication(
    py: Python<'_>,
    scenario: &str,
    t: usize,
    m: usize,
    rep_index: u64,
    base_seed: u64,
    methods: Option<Vec<String>>,
) -> PyResult<BTreeMap<String, f64>> {
    let name: ScenarioName = scenario.parse().map_err(to_py)?;
    let methods: Vec<Method> = match methods {
        Some(list) => list
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()
            .map_err(to_py)?,
        None => Method::ALL.to_vec(),
    };
    let outcome = py
        .detach(|| bench_replication(name.scenario(), t, m, rep_index, base_seed, &methods, &GdpcOptions::default()))
        .map_err(to_py)?;
    outcome
        .rel_mse
        .into_iter()
        .map(|(method, score)| {
            score
                .map(|v| (method.as_str().to_owned(), v))
                .map_err(|e| PyValueError::new_err(format!("{method}: {e}")))
        })
        .collect()
}

#[pymodule]
fn gdpc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGdpcFit>()?;
    m.add_class::<PyCommonPart>()?;
    m.add_class::<PySimulatedPanel>()?;
    m.add_function(wrap_pyfunction!(fit_gdpc, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sw, m)?)?;
    m.add_function(wrap_pyfunction!(fit_fhlr, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(relative_frobenius_error, m)?)?;
    m.add_function(wrap_pyfunction!(autocovariance, m)?)?;
    m.add_function(wrap_pyfunction!(run_replication, m)?)?;
    Ok(())
}
