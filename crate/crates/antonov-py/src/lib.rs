//! Python bindings: steady states, band structure, the discretized Antonov operator,
//! scattering residuals, damping runs and the acceptance suite.

use std::sync::Arc;

use antonov::acceptance::{self, AcceptanceConfig};
use antonov::action_angle;
use antonov::band_structure::BandStructure as CoreBands;
use antonov::dynamics::{self, InitialData, XGrid};
use antonov::operators::{AntonovOperator as CoreOperator, EigenReport, GridOptions, ModeGrid, ScanOptions};
use antonov::scattering::{free_collapse_defect, ScatterOptions, Scattering};
use antonov::steady_state::{
    solve_for_mass, solve_steady_state, AnsatzProfile, DepthRange, SolveOptions, SteadyState as CoreState,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn py_err(e: antonov::Error) -> PyErr {
    match e {
        antonov::Error::Domain(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Serializable value as plain Python objects.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn ansatz(kind: &str, k: f64) -> PyResult<AnsatzProfile> {
    match kind {
        "polytrope" => AnsatzProfile::polytrope(k).map_err(py_err),
        "king" => Ok(AnsatzProfile::king()),
        other => Err(PyValueError::new_err(format!("unknown profile kind {other:?}"))),
    }
}

/// Self-consistent steady state (U₀, ρ₀).
#[pyclass(frozen)]
struct SteadyState {
    inner: Arc<CoreState>,
}

#[pymethods]
impl SteadyState {
    /// Solves for the state with central depth `depth`; `kind` is "polytrope" or "king".
    #[new]
    #[pyo3(signature = (kind = "polytrope", depth = 1.0, k = 1.0, tol = 1e-10))]
    fn new(kind: &str, depth: f64, k: f64, tol: f64) -> PyResult<Self> {
        let opts = SolveOptions {
            tol,
            ..Default::default()
        };
        let st = solve_steady_state(ansatz(kind, k)?, depth, opts).map_err(py_err)?;
        Ok(Self { inner: Arc::new(st) })
    }

    /// Solves for the state of total mass `mass`.
    #[staticmethod]
    #[pyo3(signature = (mass, kind = "polytrope", k = 1.0, tol = 1e-10))]
    fn for_mass(mass: f64, kind: &str, k: f64, tol: f64) -> PyResult<Self> {
        let opts = SolveOptions {
            tol,
            ..Default::default()
        };
        let st = solve_for_mass(ansatz(kind, k)?, mass, opts, DepthRange::default()).map_err(py_err)?;
        Ok(Self { inner: Arc::new(st) })
    }

    /// Quadratic test well U₀ = E_min + ω²x²/2.
    #[staticmethod]
    #[pyo3(signature = (omega, emin = 0.0, depth = 1.0))]
    fn harmonic(omega: f64, emin: f64, depth: f64) -> PyResult<Self> {
        let st = CoreState::harmonic(omega, emin, depth).map_err(py_err)?;
        Ok(Self { inner: Arc::new(st) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(CoreState::from_json(text).map_err(py_err)?),
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn depth(&self) -> f64 {
        self.inner.depth
    }

    #[getter]
    fn m0(&self) -> f64 {
        self.inner.m0
    }

    #[getter]
    fn r0(&self) -> f64 {
        self.inner.r0
    }

    #[getter]
    fn e0(&self) -> f64 {
        self.inner.e0
    }

    #[getter]
    fn emin(&self) -> f64 {
        self.inner.emin
    }

    fn u0(&self, x: f64) -> f64 {
        self.inner.u0(x)
    }

    fn du0(&self, x: f64) -> f64 {
        self.inner.du0(x)
    }

    fn rho0(&self, x: f64) -> f64 {
        self.inner.rho0(x)
    }

    /// Period T(E).
    fn period(&self, e: f64) -> PyResult<f64> {
        action_angle::period(&self.inner, e).map_err(py_err)
    }

    /// T′(E).
    fn period_derivative(&self, e: f64) -> PyResult<f64> {
        action_angle::period_derivative(&self.inner, e).map_err(py_err)
    }

    /// Positive turning point x₊(E).
    fn turning_point(&self, e: f64) -> PyResult<f64> {
        action_angle::turning_point(&self.inner, e).map_err(py_err)
    }

    /// (x, v) at angle θ on the orbit of energy E; θ = 0 at x₋ and θ = 1/2 at x₊.
    fn chart_point(&self, theta: f64, e: f64) -> PyResult<(f64, f64)> {
        action_angle::chart_point(&self.inner, theta, e).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "SteadyState(depth={}, m0={:.10}, r0={:.10}, e0={:.10}, emin={:.10})",
            s.depth, s.m0, s.r0, s.e0, s.emin
        )
    }
}

/// Band edges β_l = (4πl/T)² over the energy range of a steady state.
#[pyclass(frozen)]
struct BandStructure {
    inner: CoreBands,
}

#[pymethods]
impl BandStructure {
    #[new]
    fn new(state: &SteadyState, lmax: usize) -> PyResult<Self> {
        Ok(Self {
            inner: CoreBands::build(state.inner.clone(), lmax).map_err(py_err)?,
        })
    }

    /// List of (l, beta_min, beta_max).
    fn modes(&self) -> Vec<(usize, f64, f64)> {
        self.inner.modes.iter().map(|m| (m.l, m.beta_min, m.beta_max)).collect()
    }

    /// List of (lo, hi, modes); an empty mode list marks a gap.
    fn segments(&self) -> Vec<(f64, f64, Vec<usize>)> {
        self.inner
            .segments
            .iter()
            .map(|s| (s.lo, s.hi, s.modes.clone()))
            .collect()
    }

    /// (holds, T(E_min), T(E₀)) for the condition T(E₀) > 2T(E_min).
    fn no_gap_condition(&self) -> (bool, f64, f64) {
        (self.inner.no_gap_condition(), self.inner.t_min, self.inner.t_max)
    }

    fn beta(&self, l: usize, e: f64) -> PyResult<f64> {
        self.inner.beta(l, e).map_err(py_err)
    }
}

/// Discretized Antonov operator 𝒜 = 𝒜₀ − ℬ with its eigendecomposition.
#[pyclass(frozen)]
struct AntonovOperator {
    op: CoreOperator,
    eig: EigenReport,
}

#[pymethods]
impl AntonovOperator {
    #[new]
    #[pyo3(signature = (state, lmax = 6, n_energy = 64, delta_rel = 1e-4))]
    fn new(state: &SteadyState, lmax: usize, n_energy: usize, delta_rel: f64) -> PyResult<Self> {
        let bands = Arc::new(CoreBands::build(state.inner.clone(), lmax).map_err(py_err)?);
        let opts = GridOptions {
            lmax,
            n_energy,
            delta_rel,
            ..Default::default()
        };
        let grid = ModeGrid::new(bands, opts).map_err(py_err)?;
        let op = CoreOperator::new(Arc::new(grid), 1.0).map_err(py_err)?;
        let eig = op.eigen().map_err(py_err)?;
        Ok(Self { op, eig })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Diagonal of 𝒜₀ in grid order.
    fn a0(&self) -> Vec<f64> {
        self.op.a0.clone()
    }

    /// ℬ as a list of rows.
    fn b(&self) -> Vec<Vec<f64>> {
        let n = self.op.dim();
        (0..n).map(|i| (0..n).map(|j| self.op.b[(i, j)]).collect()).collect()
    }

    /// Eigenvalues of 𝒜 in ascending order.
    fn eigenvalues(&self) -> Vec<f64> {
        self.eig.values.clone()
    }

    /// Eigenvector with the given index, in orthonormal coordinates.
    fn eigenvector(&self, index: usize) -> PyResult<Vec<f64>> {
        if index >= self.op.dim() {
            return Err(PyValueError::new_err("eigenvector index out of range"));
        }
        Ok((0..self.op.dim()).map(|i| self.eig.vectors[(i, index)]).collect())
    }

    /// Dimension, rank of ℬ and the classified eigenvalues.
    fn summary(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.op.eigen_summary(&self.eig, None))
    }

    /// Distance of spec((ℬR₀)±(γ)) to 1; `sign` selects the boundary value.
    #[pyo3(signature = (gamma, sign = 1.0))]
    fn distance_to_one(&self, gamma: f64, sign: f64) -> PyResult<f64> {
        self.op.distance_to_one(gamma, sign).map_err(py_err)
    }

    /// Embedded-eigenvalue scan on `points` γ-values of the band union.
    #[pyo3(signature = (points = 40, edge_margin_rel = 1e-3, threshold = 1e-2))]
    fn scan_embedded(&self, py: Python<'_>, points: usize, edge_margin_rel: f64, threshold: f64) -> PyResult<Py<PyAny>> {
        let gammas = self.op.gamma_grid(points, edge_margin_rel);
        let opts = ScanOptions {
            threshold,
            ..Default::default()
        };
        let scan = self.op.scan_embedded(&gammas, opts).map_err(py_err)?;
        to_py(py, &scan)
    }

    /// Residual table of the generalized Fourier maps and the free-case collapse defect.
    #[pyo3(signature = (n_beta = 0))]
    fn scattering_residuals(&self, py: Python<'_>, n_beta: usize) -> PyResult<Py<PyAny>> {
        let opts = ScatterOptions {
            n_beta,
            ..Default::default()
        };
        let sc = Scattering::build(&self.op, &self.eig, &[], opts).map_err(py_err)?;
        let collapse = free_collapse_defect(self.op.grid.clone(), opts).map_err(py_err)?;
        let dict = to_py(py, &sc.residuals(&self.op, &self.eig))?;
        dict.bind(py).set_item("free_collapse", collapse)?;
        Ok(dict)
    }

    /// Evolves the wave equation from "bump", "random" or "eigenvector" initial data.
    ///
    /// Returns the time series and the damping report.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (initial = "bump", index = 0, seed = 7, project_ac = true, horizon = None, n_time = 512))]
    fn evolve(
        &self,
        py: Python<'_>,
        initial: &str,
        index: usize,
        seed: u64,
        project_ac: bool,
        horizon: Option<f64>,
        n_time: usize,
    ) -> PyResult<Py<PyAny>> {
        let (op, eig) = (&self.op, &self.eig);
        let sel = match initial {
            "bump" => InitialData::default(),
            "random" => InitialData::Random { seed },
            "eigenvector" => InitialData::Eigenvector { index },
            other => return Err(PyValueError::new_err(format!("unknown initial data {other:?}"))),
        };
        let guard = dynamics::recurrence_guard(op, eig);
        let horizon = horizon.unwrap_or(0.5 * guard);
        if !(horizon > 0.0 && horizon.is_finite()) || n_time < 2 {
            return Err(PyValueError::new_err("need a finite positive horizon and n_time >= 2"));
        }
        let times = dynamics::time_grid(horizon, n_time);
        let mut f0 = dynamics::initial_data(op, eig, sel).map_err(py_err)?;
        let project = project_ac && !matches!(sel, InitialData::Eigenvector { .. });
        if project {
            let sc = Scattering::build(op, eig, &[], ScatterOptions::default()).map_err(py_err)?;
            f0 = dynamics::project_ac(&sc.ac, &f0).map_err(py_err)?;
        }
        let xg = XGrid::new(&op.grid, dynamics::DEFAULT_NX).map_err(py_err)?;
        let res = dynamics::evolve(op, eig, &xg, &f0, &times, false).map_err(py_err)?;
        let report = dynamics::damping_report(&res, op.grid.state().r0, guard);
        let out = to_py(py, &res)?;
        let d = out.bind(py);
        d.set_item("damping", to_py(py, &report)?)?;
        d.set_item("projected", project)?;
        Ok(out)
    }
}

/// Runs the acceptance suite (all criteria when `only` is empty) and returns one dict per criterion.
#[pyfunction]
#[pyo3(signature = (only = Vec::new()))]
fn run_acceptance(py: Python<'_>, only: Vec<u8>) -> PyResult<Py<PyAny>> {
    let results = py.detach(|| acceptance::run(AcceptanceConfig::default(), &only));
    to_py(py, &results)
}

#[pymodule(name = "antonov")]
fn antonov_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", antonov::VERSION)?;
    m.add_class::<SteadyState>()?;
    m.add_class::<BandStructure>()?;
    m.add_class::<AntonovOperator>()?;
    m.add_function(wrap_pyfunction!(run_acceptance, m)?)?;
    Ok(())
}
