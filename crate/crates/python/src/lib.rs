//! Python bindings for the chokesim workbench.

use chokesim::analytic::{self, SteadyInput};
use chokesim::harness::{self, Scenario};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Solve the steady-state operating point. Returns (mu0, h0).
#[pyfunction]
#[pyo3(signature = (x0, r = 0.0, tol = analytic::DEFAULT_TOL))]
fn solve_steady(x0: f64, r: f64, tol: f64) -> PyResult<(f64, f64)> {
    let ss = analytic::solve_steady_state(SteadyInput::new(x0, r).map_err(err)?, tol)
        .map_err(err)?;
    Ok((ss.mu0, ss.h0))
}

/// Derived model coefficients for a given backlog and link capacity.
#[pyclass]
struct Coefficients {
    inner: analytic::DerivedCoefficients,
}

#[pymethods]
impl Coefficients {
    #[new]
    #[pyo3(signature = (x0, b, c, r = 0.0))]
    fn new(x0: f64, b: u32, c: f64, r: f64) -> PyResult<Self> {
        let ss = analytic::solve_steady_state(
            SteadyInput::new(x0, r).map_err(err)?,
            analytic::DEFAULT_TOL,
        )
        .map_err(err)?;
        let inner = analytic::derive_coefficients(ss, b, c).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn mu0(&self) -> f64 {
        self.inner.steady.mu0
    }
    #[getter]
    fn h0(&self) -> f64 {
        self.inner.steady.h0
    }
    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }
    #[getter]
    fn tau_b(&self) -> f64 {
        self.inner.tau_b
    }
    #[getter]
    fn rho0_tail(&self) -> f64 {
        self.inner.rho0_tail
    }

    /// UDP utilization dT seconds after the rate changes to x02 (multiple of C).
    fn transient(&self, x02: f64, dt: f64) -> PyResult<f64> {
        self.inner
            .transient_utilization(x02 * self.inner.capacity, dt)
            .map_err(err)
    }

    /// Peak (alpha < 1) or dip (alpha > 1) utilization after a rate change
    /// by factor alpha.
    fn extreme(&self, alpha: f64) -> PyResult<f64> {
        self.inner.extreme_utilization(alpha).map_err(err)
    }

    /// Spatial profile as a list of (y, rho0, v, tau) tuples, tail to head.
    fn profile(&self, samples: usize) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let p = analytic::build_profile(
            &self.inner.steady,
            self.inner.b,
            self.inner.capacity,
            samples,
        )
        .map_err(err)?;
        Ok(p.samples.iter().map(|s| (s.y, s.rho0, s.v, s.tau)).collect())
    }
}

/// Run a scenario (JSON string) and return a JSON summary with the
/// aggregated windowed trace.
#[pyfunction]
fn run_scenario(scenario_json: &str) -> PyResult<String> {
    let sc = Scenario::from_json(scenario_json).map_err(err)?;
    let agg = harness::run_replications(&sc).map_err(err)?;
    let summary = serde_json::json!({
        "steady_mu0": agg.steady_mu0(),
        "replications": agg.replications,
        "counters": agg.counters,
        "rows": agg.rows,
    });
    Ok(summary.to_string())
}

#[pymodule]
fn chokesim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve_steady, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_class::<Coefficients>()?;
    Ok(())
}
