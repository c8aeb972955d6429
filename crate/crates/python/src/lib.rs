//! Python bindings: grids, fields, the scalar functionals, the constrained
//! flow, the bubble analyzer, and the shooting oracle.
//!
//! Report-like results (bubble reports, stop reports) cross the boundary as
//! JSON strings so the Python side sees exactly what the CLI writes to disk.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use mtflow_core::bubbles;
use mtflow_core::energy::{self, ConstraintKind};
use mtflow_core::flow::{self, StopConfig};
use mtflow_core::grid::{self, DomainSpec};
use mtflow_core::runner;
use mtflow_core::seeds;
use mtflow_core::stationary;

fn err(e: mtflow_core::Error) -> PyErr {
    PyValueError::new_err(format!("{e}"))
}

#[pyclass(name = "Grid", frozen)]
#[derive(Clone)]
struct PyGrid {
    inner: Arc<grid::Grid>,
}

#[pymethods]
impl PyGrid {
    /// Radial mesh on the ball B_R(0) with n intervals.
    #[staticmethod]
    fn radial(radius: f64, n: usize) -> PyResult<PyGrid> {
        Ok(PyGrid { inner: Arc::new(grid::build_radial_grid(radius, n).map_err(err)?) })
    }

    /// Masked Cartesian mesh on a disc.
    #[staticmethod]
    fn ball(radius: f64, h: f64) -> PyResult<PyGrid> {
        let d = DomainSpec::Ball { cx: 0.0, cy: 0.0, r: radius };
        Ok(PyGrid { inner: Arc::new(grid::build_masked_grid(&d, h).map_err(err)?) })
    }

    /// Masked Cartesian mesh on the annulus inner < |x| < outer.
    #[staticmethod]
    fn annulus(outer: f64, inner: f64, h: f64) -> PyResult<PyGrid> {
        let d = DomainSpec::Annulus { outer, inner };
        Ok(PyGrid { inner: Arc::new(grid::build_masked_grid(&d, h).map_err(err)?) })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    #[getter]
    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn coords(&self) -> Vec<(f64, f64)> {
        self.inner.coords().iter().map(|c| (c[0], c[1])).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn is_boundary(&self, i: usize) -> bool {
        self.inner.is_boundary(i)
    }

    fn __repr__(&self) -> String {
        format!("Grid(kind={:?}, nodes={}, h={})", self.inner.kind(), self.inner.node_count(), self.inner.spacing())
    }
}

#[pyclass(name = "Field", frozen)]
#[derive(Clone)]
struct PyField {
    inner: grid::Field,
}

#[pymethods]
impl PyField {
    /// Wrap one value per grid node; zero_boundary marks an H¹₀ member.
    #[staticmethod]
    #[pyo3(signature = (grid, values, zero_boundary = false))]
    fn from_values(grid: &PyGrid, values: Vec<f64>, zero_boundary: bool) -> PyResult<PyField> {
        Ok(PyField {
            inner: grid::Field::new(grid.inner.clone(), values, zero_boundary).map_err(err)?,
        })
    }

    #[staticmethod]
    fn zeros(grid: &PyGrid) -> PyField {
        PyField { inner: grid::Field::zeros(grid.inner.clone()) }
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn u_max(&self) -> f64 {
        self.inner.u_max()
    }

    #[getter]
    fn zero_boundary(&self) -> bool {
        self.inner.zero_boundary()
    }

    fn interpolate(&self, x: f64, y: f64) -> f64 {
        self.inner.interpolate([x, y])
    }

    fn scaled(&self, factor: f64) -> PyField {
        PyField { inner: self.inner.map(|v| factor * v) }
    }

    /// Write the snapshot CSV format.
    fn save(&self, path: String) -> PyResult<()> {
        grid::save_snapshot(&self.inner, path).map_err(err)
    }

    /// Read a snapshot CSV, rebuilding its grid from the header.
    #[staticmethod]
    fn load(path: String) -> PyResult<PyField> {
        Ok(PyField { inner: grid::load_snapshot(path).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Field(nodes={}, u_max={:.6})", self.inner.values().len(), self.inner.u_max())
    }
}

#[pyfunction]
fn laplacian(u: &PyField) -> PyResult<PyField> {
    Ok(PyField { inner: u.inner.grid().laplacian(&u.inner).map_err(err)? })
}

#[pyfunction]
fn integrate(f: &PyField) -> PyResult<f64> {
    f.inner.grid().integrate(&f.inner).map_err(err)
}

#[pyfunction]
fn dirichlet_energy(u: &PyField) -> PyResult<f64> {
    u.inner.grid().dirichlet_energy(&u.inner).map_err(err)
}

#[pyfunction]
fn mt_energy(u: &PyField) -> PyResult<f64> {
    energy::mt_energy(&u.inner).map_err(err)
}

#[pyfunction]
fn lambda_volume(u: &PyField) -> PyResult<f64> {
    energy::lambda_volume(&u.inner).map_err(err)
}

#[pyfunction]
fn lambda_dirichlet(u: &PyField) -> PyResult<f64> {
    energy::lambda_dirichlet(&u.inner).map_err(err)
}

#[pyfunction]
fn kinetic(u: &PyField, u_t: &PyField) -> PyResult<f64> {
    energy::kinetic(&u.inner, &u_t.inner).map_err(err)
}

/// Returns (weighted_mass, half_energy, holds) for ∫u²e^{u²} ≥ E(u)/2.
#[pyfunction]
fn check_lower_bound(u: &PyField) -> PyResult<(f64, f64, bool)> {
    let rep = energy::check_lower_bound(&u.inner).map_err(err)?;
    Ok((rep.weighted_mass, rep.half_energy, rep.holds))
}

#[pyfunction]
#[pyo3(signature = (grid, rho, outer, cx = 0.0, cy = 0.0))]
fn moser_function(grid: &PyGrid, rho: f64, outer: f64, cx: f64, cy: f64) -> PyResult<PyField> {
    let p = seeds::MoserParams { rho, outer, center: [cx, cy] };
    Ok(PyField { inner: seeds::moser_function(&p, &grid.inner).map_err(err)? })
}

#[pyfunction]
fn cutoff(grid: &PyGrid, r2: f64, outer: f64) -> PyResult<PyField> {
    Ok(PyField { inner: seeds::cutoff(r2, outer, &grid.inner).map_err(err)? })
}

#[pyfunction]
fn coron_field(
    grid: &PyGrid,
    s: f64,
    angle: f64,
    plateau_radius: f64,
    rho: f64,
    cutoff_radius: f64,
) -> PyResult<PyField> {
    let r3 = 3.0 * plateau_radius;
    let p = seeds::CoronParams {
        s,
        center: [r3 * angle.cos(), r3 * angle.sin()],
        plateau_radius,
        rho,
        cutoff_radius,
        target_energy: 1.0,
    };
    Ok(PyField { inner: seeds::coron_field(&p, &grid.inner).map_err(err)? })
}

/// Returns (alpha, scaled_field) with E(sqrt(alpha)·v) = c0.
#[pyfunction]
fn normalize_alpha(v: &PyField, c0: f64) -> PyResult<(f64, PyField)> {
    let (alpha, w) = seeds::normalize_alpha(&v.inner, c0).map_err(err)?;
    Ok((alpha, PyField { inner: w }))
}

#[pyfunction]
fn center_of_mass(u: &PyField) -> PyResult<(f64, f64)> {
    let m = seeds::center_of_mass(&u.inner).map_err(err)?;
    Ok((m[0], m[1]))
}

#[pyclass(name = "FlowState")]
struct PyFlowState {
    inner: Option<flow::FlowState>,
}

impl PyFlowState {
    fn state(&self) -> PyResult<&flow::FlowState> {
        self.inner
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("flow state was consumed by a failed step"))
    }
}

#[pymethods]
impl PyFlowState {
    /// mode is "volume" or "dirichlet"; target None takes it from the field.
    #[staticmethod]
    #[pyo3(signature = (u0, mode, target = None, dt = 1e-3))]
    fn new(u0: &PyField, mode: &str, target: Option<f64>, dt: f64) -> PyResult<PyFlowState> {
        let constraint = match (mode, target) {
            ("volume", Some(c0)) => ConstraintKind::volume(c0),
            ("volume", None) => {
                energy::mt_energy(&u0.inner).and_then(ConstraintKind::volume)
            }
            ("dirichlet", Some(l0)) => ConstraintKind::dirichlet(l0),
            ("dirichlet", None) => u0
                .inner
                .grid()
                .dirichlet_energy(&u0.inner)
                .and_then(ConstraintKind::dirichlet),
            _ => return Err(PyValueError::new_err("mode must be 'volume' or 'dirichlet'")),
        }
        .map_err(err)?;
        Ok(PyFlowState {
            inner: Some(flow::FlowState::new(u0.inner.clone(), constraint, dt).map_err(err)?),
        })
    }

    #[getter]
    fn t(&self) -> PyResult<f64> {
        Ok(self.state()?.t)
    }

    #[getter]
    fn lambda_(&self) -> PyResult<f64> {
        Ok(self.state()?.lambda)
    }

    #[getter]
    fn dt(&self) -> PyResult<f64> {
        Ok(self.state()?.dt)
    }

    fn field(&self) -> PyResult<PyField> {
        Ok(PyField { inner: self.state()?.u.clone() })
    }

    /// Advance one semi-implicit step; returns the clip count.
    fn step(&mut self) -> PyResult<usize> {
        let state = self
            .inner
            .take()
            .ok_or_else(|| PyValueError::new_err("flow state was consumed by a failed step"))?;
        match flow::step(&state) {
            Ok((next, info)) => {
                self.inner = Some(next);
                Ok(info.clip_count)
            }
            Err(e) => {
                self.inner = Some(state);
                Err(err(e))
            }
        }
    }

    /// Integrate until steady / time limit / blow-up; returns
    /// (ledger_rows, stop_report_json) where each ledger row is a tuple
    /// (t, E, D, lambda, u_max, kinetic, constraint_residual).
    #[pyo3(signature = (t_max, blowup_umax = 12.0, eps_steady = None, dt_max = 0.05))]
    fn run(
        &mut self,
        t_max: f64,
        blowup_umax: f64,
        eps_steady: Option<f64>,
        dt_max: f64,
    ) -> PyResult<(Vec<(f64, f64, f64, f64, f64, f64, f64)>, String)> {
        let state = self
            .inner
            .take()
            .ok_or_else(|| PyValueError::new_err("flow state was consumed by a failed step"))?;
        let cfg = StopConfig { eps_steady, blowup_umax, dt_max, ..StopConfig::default() };
        let out = flow::run(state, t_max, &cfg, |_, _| {}).map_err(err)?;
        let rows = out
            .ledger
            .iter()
            .map(|r| {
                (r.t, r.mt_energy, r.dirichlet_energy, r.lambda, r.u_max, r.kinetic, r.constraint_residual)
            })
            .collect();
        let report = serde_json::to_string(&out.report).map_err(|e| PyValueError::new_err(e.to_string()))?;
        self.inner = Some(out.final_state);
        Ok((rows, report))
    }
}

#[pyfunction]
fn bubble_scale(u_peak: f64, lambda: f64) -> PyResult<f64> {
    bubbles::bubble_scale(u_peak, lambda).map_err(err)
}

#[pyfunction]
fn liouville_profile(x: f64, y: f64) -> f64 {
    bubbles::liouville_profile([x, y])
}

#[pyfunction]
fn liouville_mass(l: f64) -> f64 {
    bubbles::liouville_mass(l)
}

/// Returns (level, deviation, verdict) with verdict one of
/// "quantized", "non-concentrating", "anomalous".
#[pyfunction]
fn quantize(local_energy: f64, tol_frac: f64) -> (u32, f64, String) {
    let (l, dev, verdict) = bubbles::quantize(local_energy, tol_frac);
    let v = match verdict {
        bubbles::QuantizationVerdict::Quantized => "quantized",
        bubbles::QuantizationVerdict::NonConcentrating => "non-concentrating",
        bubbles::QuantizationVerdict::Anomalous => "anomalous",
    };
    (l, dev, v.to_string())
}

/// Full snapshot analysis; returns the bubble reports as a JSON string.
#[pyfunction]
#[pyo3(signature = (u, lambda, tol_frac = 0.1, nu_peak = 1.0, profile_box = 4.0, local_energy_box = 20.0))]
fn analyze_snapshot(
    u: &PyField,
    lambda: f64,
    tol_frac: f64,
    nu_peak: f64,
    profile_box: f64,
    local_energy_box: f64,
) -> PyResult<String> {
    let cfg = bubbles::AnalysisConfig {
        tol_frac,
        nu_peak,
        profile_box,
        local_energy_box,
        ..Default::default()
    };
    let reports = bubbles::analyze_snapshot(&u.inner, lambda, &cfg).map_err(err)?;
    serde_json::to_string(&reports).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Shooting solve of −Δu = λue^{u²} with u(R) = 0; returns a dict-like JSON
/// string with amplitude, energies, and the boundary residual.
#[pyfunction]
#[pyo3(signature = (lambda, radius = 1.0, a_lo = 0.05, a_hi = 5.0, n = 262_144))]
fn solve_dirichlet(lambda: f64, radius: f64, a_lo: f64, a_hi: f64, n: usize) -> PyResult<String> {
    let sol = stationary::solve_dirichlet(lambda, radius, (a_lo, a_hi), n).map_err(err)?;
    Ok(format!(
        "{{\"lambda\":{},\"amplitude\":{},\"dirichlet_energy\":{},\"mt_energy\":{},\"boundary_residual\":{},\"iterations\":{}}}",
        sol.lambda,
        sol.amplitude,
        sol.dirichlet_energy(),
        sol.mt_energy(),
        sol.boundary_residual,
        sol.iterations
    ))
}

/// Sample a shooting solution onto a radial grid.
#[pyfunction]
#[pyo3(signature = (grid, lambda, a_lo = 0.05, a_hi = 5.0, n = 262_144))]
fn stationary_field(grid: &PyGrid, lambda: f64, a_lo: f64, a_hi: f64, n: usize) -> PyResult<PyField> {
    let radius = grid
        .inner
        .radius()
        .ok_or_else(|| PyValueError::new_err("stationary solutions live on radial grids"))?;
    let sol = stationary::solve_dirichlet(lambda, radius, (a_lo, a_hi), n).map_err(err)?;
    Ok(PyField { inner: sol.sample_on(&grid.inner).map_err(err)? })
}

#[pyfunction]
fn presets() -> Vec<String> {
    runner::PRESET_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Run a scenario from its JSON text; returns the process-style exit code.
#[pyfunction]
fn run_scenario_json(config_json: &str) -> PyResult<i32> {
    let cfg = runner::ScenarioConfig::from_json(config_json).map_err(err)?;
    let outcome = runner::run_scenario(&cfg).map_err(err)?;
    Ok(outcome.status.code())
}

/// Run the built-in invariant corpus; returns (name, pass, detail) triples.
#[pyfunction]
fn selftest() -> Vec<(String, bool, String)> {
    runner::selftest()
        .into_iter()
        .map(|r| (r.name.to_string(), r.pass, r.detail))
        .collect()
}

#[pymodule]
fn mtflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyFlowState>()?;
    m.add_function(wrap_pyfunction!(laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet_energy, m)?)?;
    m.add_function(wrap_pyfunction!(mt_energy, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_volume, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_dirichlet, m)?)?;
    m.add_function(wrap_pyfunction!(kinetic, m)?)?;
    m.add_function(wrap_pyfunction!(check_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(moser_function, m)?)?;
    m.add_function(wrap_pyfunction!(cutoff, m)?)?;
    m.add_function(wrap_pyfunction!(coron_field, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(center_of_mass, m)?)?;
    m.add_function(wrap_pyfunction!(bubble_scale, m)?)?;
    m.add_function(wrap_pyfunction!(liouville_profile, m)?)?;
    m.add_function(wrap_pyfunction!(liouville_mass, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dirichlet, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_field, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario_json, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add("QUANTUM", 4.0 * std::f64::consts::PI)?;
    Ok(())
}
