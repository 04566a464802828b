//! Python bindings. Parameters and points are Python `complex` values;
//! every result object also offers `to_json()` with the library's serde form.

use pyo3::exceptions::{PyLookupError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

use explab_core as core;
use explab_core::hyperbolic::{HyperbolicError, SearchStrategy};
use explab_core::motion::MotionError;
use explab_core::orbit::{EscapePolicy, Param, DEFAULT_MAX_ITER, DEFAULT_RE_THRESHOLD};
use explab_core::Complex;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn param(z: Complex) -> PyResult<Param> {
    Param::new(z).map_err(value_err)
}

fn policy(max_iter: usize, threshold: f64) -> PyResult<EscapePolicy> {
    EscapePolicy::new(threshold, max_iter).map_err(value_err)
}

fn json<T: Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyclass(frozen, module = "explab")]
struct OrbitRecord(core::OrbitRecord);

#[pymethods]
impl OrbitRecord {
    #[getter]
    fn points(&self) -> Vec<Complex> {
        self.0.values().collect()
    }

    /// `"completed"`, `"escaped"` or `"cycle_suspected"`.
    #[getter]
    fn status(&self) -> &'static str {
        match self.0.status {
            core::OrbitStatus::Completed => "completed",
            core::OrbitStatus::Escaped { .. } => "escaped",
            core::OrbitStatus::CycleSuspected { .. } => "cycle_suspected",
        }
    }

    #[getter]
    fn escaped_at(&self) -> Option<usize> {
        self.0.escaped_at()
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }

    fn __len__(&self) -> usize {
        self.0.points.len()
    }
}

#[pyclass(frozen, module = "explab")]
struct DerivativeLedger(core::DerivativeLedger);

#[pymethods]
impl DerivativeLedger {
    #[getter]
    fn partial_sums(&self) -> Vec<Complex> {
        self.0.entries.iter().map(|e| e.s).collect()
    }

    #[getter]
    fn transversality(&self) -> Vec<Complex> {
        self.0.entries.iter().map(|e| e.t).collect()
    }

    #[getter]
    fn log_mag_d(&self) -> Vec<f64> {
        self.0.entries.iter().map(|e| e.log_mag_d).collect()
    }

    /// `zeta'_n`, cross-checked between recursion and closed form.
    fn param_derivative(&self, n: usize) -> PyResult<Complex> {
        let d = core::derivatives::param_derivative(&self.0, n).map_err(value_err)?;
        d.to_complex().ok_or_else(|| PyValueError::new_err("derivative exceeds float range"))
    }

    #[pyo3(signature = (tol = 1e-9))]
    fn levin(&self, tol: f64) -> LevinEstimate {
        LevinEstimate(core::derivatives::levin_estimate(&self.0, tol))
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }
}

#[pyclass(frozen, module = "explab")]
struct LevinEstimate(core::LevinEstimate);

#[pymethods]
impl LevinEstimate {
    #[getter]
    fn value(&self) -> Complex {
        self.0.value
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn tail_bound(&self) -> f64 {
        self.0.tail_bound
    }

    #[getter]
    fn terms_used(&self) -> usize {
        self.0.terms_used
    }
}

#[pyclass(frozen, skip_from_py_object, module = "explab")]
#[derive(Clone)]
struct CycleInfo(core::CycleInfo);

#[pymethods]
impl CycleInfo {
    #[getter]
    fn period(&self) -> usize {
        self.0.period
    }

    #[getter]
    fn point(&self) -> Complex {
        self.0.point
    }

    #[getter]
    fn multiplier(&self) -> Complex {
        self.0.multiplier
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }

    fn __repr__(&self) -> String {
        format!("CycleInfo(period={}, point={}, multiplier={})", self.0.period, self.0.point, self.0.multiplier)
    }
}

#[pyclass(frozen, module = "explab")]
struct ParamClass(core::ParamClass);

#[pymethods]
impl ParamClass {
    /// `"attracting"`, `"escaping"`, `"nr_candidate"` or `"undecided"`.
    #[getter]
    fn tag(&self) -> &'static str {
        self.0.label()
    }

    #[getter]
    fn cycle(&self) -> Option<CycleInfo> {
        match self.0.tag {
            core::ParamTag::Attracting { cycle } => Some(CycleInfo(cycle)),
            _ => None,
        }
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("ParamClass({})", self.0.label())
    }
}

#[pyclass(frozen, module = "explab")]
struct HyperbolicWitness(core::HyperbolicWitness);

#[pymethods]
impl HyperbolicWitness {
    #[getter]
    fn lambda_(&self) -> Complex {
        self.0.lambda.value()
    }

    #[getter]
    fn distance_to_seed(&self) -> f64 {
        self.0.distance_to_seed
    }

    #[getter]
    fn cycle(&self) -> CycleInfo {
        CycleInfo(self.0.cycle)
    }

    #[getter]
    fn certified(&self) -> bool {
        self.0.certificate.as_ref().is_some_and(|c| c.verify())
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }
}

#[pyclass(frozen, module = "explab")]
struct MotionTrack(core::MotionTrack);

#[pymethods]
impl MotionTrack {
    #[getter]
    fn tracked_point(&self) -> Complex {
        self.0.tracked_point
    }

    #[getter]
    fn conjugacy_residual(&self) -> f64 {
        self.0.conjugacy_residual
    }

    fn verify(&self) -> PyResult<f64> {
        core::verify_conjugacy(&self.0).map_err(motion_err)
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }
}

#[pyclass(frozen, module = "explab")]
struct DensityReport(core::DensityReport);

#[pymethods]
impl DensityReport {
    #[getter]
    fn candidate_fractions(&self) -> Vec<Vec<f64>> {
        self.0.candidate_fractions()
    }

    #[getter]
    fn budget_monotone(&self) -> bool {
        self.0.is_budget_monotone()
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }
}

fn motion_err(e: MotionError) -> PyErr {
    match e {
        MotionError::PreconditionViolation(_) => value_err(e),
        MotionError::BudgetExceeded { .. } => PyLookupError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyfunction]
#[pyo3(signature = (lam, max_iter = DEFAULT_MAX_ITER, threshold = DEFAULT_RE_THRESHOLD))]
fn singular_orbit(lam: Complex, max_iter: usize, threshold: f64) -> PyResult<OrbitRecord> {
    Ok(OrbitRecord(core::singular_orbit(param(lam)?, &policy(max_iter, threshold)?)))
}

#[pyfunction]
#[pyo3(signature = (lam, max_iter = DEFAULT_MAX_ITER, threshold = DEFAULT_RE_THRESHOLD))]
fn build_ledger(lam: Complex, max_iter: usize, threshold: f64) -> PyResult<DerivativeLedger> {
    Ok(DerivativeLedger(core::build_ledger(param(lam)?, &policy(max_iter, threshold)?)))
}

#[pyfunction]
#[pyo3(signature = (lam, delta = 1.0, max_iter = DEFAULT_MAX_ITER, threshold = DEFAULT_RE_THRESHOLD))]
fn classify(lam: Complex, delta: f64, max_iter: usize, threshold: f64) -> PyResult<ParamClass> {
    core::classify_parameter(param(lam)?, &policy(max_iter, threshold)?, delta)
        .map(ParamClass)
        .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (lam, z0, period, tol = 1e-12, max_iter = 60))]
fn newton_refine_cycle(lam: Complex, z0: Complex, period: usize, tol: f64, max_iter: usize) -> PyResult<CycleInfo> {
    core::classify::newton_refine_cycle(param(lam)?, z0, period, tol, max_iter)
        .map(CycleInfo)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (lam, radius, strategy = "route", max_iter = DEFAULT_MAX_ITER))]
fn find_hyperbolic_near(lam: Complex, radius: f64, strategy: &str, max_iter: usize) -> PyResult<HyperbolicWitness> {
    let strategy = match strategy {
        "route" => SearchStrategy::Route,
        "scan" => SearchStrategy::Scan,
        other => return Err(PyValueError::new_err(format!("unknown strategy {other:?}"))),
    };
    let pol = policy(max_iter, DEFAULT_RE_THRESHOLD)?;
    core::find_hyperbolic_near(param(lam)?, radius, &pol, strategy)
        .map(HyperbolicWitness)
        .map_err(|e| match e {
            HyperbolicError::NotFound { .. } => PyLookupError::new_err(e.to_string()),
            HyperbolicError::InvalidInput(_) => value_err(e),
            _ => PyRuntimeError::new_err(e.to_string()),
        })
}

#[pyfunction]
#[pyo3(signature = (lambda0, lambda1, z, depth = 30, steps = 8))]
fn track_point(lambda0: Complex, lambda1: Complex, z: Complex, depth: usize, steps: usize) -> PyResult<MotionTrack> {
    core::track_point(param(lambda0)?, param(lambda1)?, z, depth, steps)
        .map(MotionTrack)
        .map_err(motion_err)
}

#[pyfunction]
fn time_to_scale(lambda0: Complex, r: f64, s: f64) -> PyResult<usize> {
    core::time_to_scale(param(lambda0)?, r, s).map_err(motion_err)
}

#[pyfunction]
#[pyo3(signature = (lambda0, delta, radii, budgets, samples, seed = 42))]
fn density_scan(
    lambda0: Complex,
    delta: f64,
    radii: Vec<f64>,
    budgets: Vec<usize>,
    samples: usize,
    seed: u64,
) -> PyResult<DensityReport> {
    core::density_scan(param(lambda0)?, delta, &radii, &budgets, samples, seed)
        .map(DensityReport)
        .map_err(value_err)
}

/// Parameter plane as binary PPM bytes.
#[pyfunction]
#[pyo3(signature = (rect, width, height, max_iter = 200, delta = 1.0))]
fn render_parameter_plane<'py>(
    py: Python<'py>,
    rect: (f64, f64, f64, f64),
    width: usize,
    height: usize,
    max_iter: usize,
    delta: f64,
) -> PyResult<Bound<'py, PyBytes>> {
    let view = core::ViewRect::new(rect.0, rect.1, rect.2, rect.3, width, height).map_err(value_err)?;
    let pol = policy(max_iter, DEFAULT_RE_THRESHOLD)?;
    let img = core::render_parameter_plane(&view, &pol, delta, &core::Palette::default());
    Ok(PyBytes::new(py, &img.to_ppm()))
}

#[pymodule]
fn explab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<OrbitRecord>()?;
    m.add_class::<DerivativeLedger>()?;
    m.add_class::<LevinEstimate>()?;
    m.add_class::<CycleInfo>()?;
    m.add_class::<ParamClass>()?;
    m.add_class::<HyperbolicWitness>()?;
    m.add_class::<MotionTrack>()?;
    m.add_class::<DensityReport>()?;
    m.add_function(wrap_pyfunction!(singular_orbit, m)?)?;
    m.add_function(wrap_pyfunction!(build_ledger, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(newton_refine_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(find_hyperbolic_near, m)?)?;
    m.add_function(wrap_pyfunction!(track_point, m)?)?;
    m.add_function(wrap_pyfunction!(time_to_scale, m)?)?;
    m.add_function(wrap_pyfunction!(density_scan, m)?)?;
    m.add_function(wrap_pyfunction!(render_parameter_plane, m)?)?;
    Ok(())
}
