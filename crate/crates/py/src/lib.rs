//! Python bindings: time scales, graininess-parametric controller
//! synthesis, closed-loop simulation, and avoidance-condition
//! verification. Matrices cross the boundary as row-major lists of
//! lists; results come back as small attribute-holding classes.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use tsavoid_core::avoidance::{
    synthesize as core_synthesize, verify_conditions, AvoidanceProblem, GridSpec, LinearPlant,
    StrategyMode, DEADBAND_DEFAULT,
};
use tsavoid_core::calculus::{delta_integral as core_delta_integral, ScalarSignal};
use tsavoid_core::linalg::lyapunov_solve as core_lyapunov_solve;
use tsavoid_core::simulator::{simulate as core_simulate, PursuerPolicy, SimConfig};
use tsavoid_core::TimeScale as CoreTimeScale;

fn err(e: tsavoid_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_dmatrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err(format!("{what} must be non-empty")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!(
            "{what} rows have unequal lengths"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Finite union of closed intervals and points with jump operators.
#[pyclass(name = "TimeScale")]
struct PyTimeScale {
    inner: CoreTimeScale,
}

#[pymethods]
impl PyTimeScale {
    /// Single closed interval [t0, t1].
    #[staticmethod]
    fn reals(t0: f64, t1: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreTimeScale::reals(t0, t1).map_err(err)? })
    }

    /// Unit grid t0, t0+1, ..., t1.
    #[staticmethod]
    fn integers(t0: f64, t1: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreTimeScale::integers(t0, t1).map_err(err)? })
    }

    /// Grid with spacing h.
    #[staticmethod]
    fn h_grid(h: f64, t0: f64, t1: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreTimeScale::h_grid(h, t0, t1).map_err(err)? })
    }

    /// Alternating scale P_{a,b}: dense runs of length a separated by
    /// gaps of length b.
    #[staticmethod]
    fn periodic(a: f64, b: f64, t0: f64, t1: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreTimeScale::periodic(a, b, t0, t1).map_err(err)? })
    }

    /// Explicit segments [(l, r), ...]; points are (p, p).
    #[staticmethod]
    fn explicit(segments: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self { inner: CoreTimeScale::explicit(&segments).map_err(err)? })
    }

    fn sigma(&self, t: f64) -> PyResult<f64> {
        self.inner.sigma(t).map_err(err)
    }

    fn rho(&self, t: f64) -> PyResult<f64> {
        self.inner.rho(t).map_err(err)
    }

    fn graininess(&self, t: f64) -> PyResult<f64> {
        self.inner.graininess(t).map_err(err)
    }

    fn contains(&self, t: f64) -> bool {
        self.inner.contains(t)
    }

    fn window(&self) -> (f64, f64) {
        self.inner.window()
    }

    /// Distinct graininess values over the window, ascending.
    fn graininess_values(&self) -> Vec<f64> {
        self.inner.graininess_values()
    }

    /// All scattered points plus dense samples at most dense_step apart.
    fn sample(&self, dense_step: f64) -> PyResult<Vec<f64>> {
        self.inner.sample(dense_step).map_err(err)
    }

    fn __repr__(&self) -> String {
        let (t0, t1) = self.inner.window();
        format!(
            "TimeScale(window=[{t0}, {t1}], segments={})",
            self.inner.segments().len()
        )
    }
}

/// Two-agent linear plant x^Delta = A x + B u1 + C u2 with norm bounds
/// |u1| <= alpha1, |u2| <= alpha2.
#[pyclass(name = "Plant")]
struct PyPlant {
    inner: LinearPlant,
}

#[pymethods]
impl PyPlant {
    #[new]
    fn new(
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        alpha1: f64,
        alpha2: f64,
    ) -> PyResult<Self> {
        let plant = LinearPlant::new(
            to_dmatrix(&a, "A")?,
            to_dmatrix(&b, "B")?,
            to_dmatrix(&c, "C")?,
            alpha1,
            alpha2,
        )
        .map_err(err)?;
        Ok(Self { inner: plant })
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
}

/// Synthesized strategy data for one graininess value.
#[pyclass(name = "Synthesis")]
struct PySynthesis {
    #[pyo3(get)]
    mu: f64,
    /// Lyapunov matrix Q, row-major.
    #[pyo3(get)]
    q: Vec<Vec<f64>>,
    /// Matching matrix D with C = B D.
    #[pyo3(get)]
    d: Vec<Vec<f64>>,
    /// Switching magnitude ||D|| alpha2.
    #[pyo3(get)]
    gain: f64,
    /// Hilger-circle membership of each eigenvalue of -(A+BK).
    #[pyo3(get)]
    hilger_inside: Vec<bool>,
    #[pyo3(get)]
    hilger_all_inside: bool,
}

/// One simulated run: sampled times, states, and the value function.
#[pyclass(name = "SimResult")]
struct PySimResult {
    /// "avoided", "entered_A_at t=...", or "left_domain_at t=...".
    #[pyo3(get)]
    verdict: String,
    #[pyo3(get)]
    t: Vec<f64>,
    #[pyo3(get)]
    x: Vec<Vec<f64>>,
    #[pyo3(get)]
    v: Vec<f64>,
    #[pyo3(get)]
    dv: Vec<f64>,
    #[pyo3(get)]
    min_v: f64,
    #[pyo3(get)]
    min_dv: f64,
}

/// Avoidance-condition check result.
#[pyclass(name = "VerifyResult")]
struct PyVerifyResult {
    #[pyo3(get)]
    passed: bool,
    #[pyo3(get)]
    condition_i_margin: f64,
    #[pyo3(get)]
    condition_ii_margin: f64,
    #[pyo3(get)]
    witness_t: f64,
    #[pyo3(get)]
    witness_x: Vec<f64>,
    #[pyo3(get)]
    witness_dv: f64,
    #[pyo3(get)]
    points_checked: usize,
    #[pyo3(get)]
    notes: Vec<String>,
}

/// Solve A^T Q + Q A + mu A^T Q A = M for symmetric Q.
#[pyfunction]
fn lyapunov_solve(a: Vec<Vec<f64>>, m: Vec<Vec<f64>>, mu: f64) -> PyResult<Vec<Vec<f64>>> {
    let q = core_lyapunov_solve(&to_dmatrix(&a, "A")?, &to_dmatrix(&m, "M")?, mu).map_err(err)?;
    Ok(matrix_rows(&q))
}

/// Synthesize the avoidance strategy at graininess mu: D from C = B D,
/// Q from the closed-loop Lyapunov equation, gain = ||D|| alpha2.
#[pyfunction]
#[pyo3(signature = (plant, k, mu, m=None))]
fn synthesize(
    plant: &PyPlant,
    k: Vec<Vec<f64>>,
    mu: f64,
    m: Option<Vec<Vec<f64>>>,
) -> PyResult<PySynthesis> {
    let n = plant.inner.state_dim();
    let m = match m {
        Some(rows) => to_dmatrix(&rows, "M")?,
        None => DMatrix::identity(n, n),
    };
    let syn = core_synthesize(&plant.inner, &to_dmatrix(&k, "K")?, &m, mu, DEADBAND_DEFAULT)
        .map_err(err)?;
    Ok(PySynthesis {
        mu,
        q: matrix_rows(&syn.params.q),
        d: matrix_rows(&syn.params.d),
        gain: syn.params.gain,
        hilger_inside: syn.hilger.inside.clone(),
        hilger_all_inside: syn.hilger.all_inside,
    })
}

fn policy_from(name: &str) -> PyResult<PursuerPolicy> {
    match name {
        "worst_case" => Ok(PursuerPolicy::WorstCase),
        "random" => Ok(PursuerPolicy::Random),
        other => Err(PyValueError::new_err(format!(
            "unknown policy {other:?}; expected \"worst_case\" or \"random\""
        ))),
    }
}

/// Closed-loop run from x0: Q synthesized at the graininess of the
/// window start, avoidance set {V <= level}, zone width epsilon.
#[pyfunction]
#[pyo3(signature = (plant, k, ts, x0, level=1.0, epsilon=1.0, policy="worst_case",
                    dense_step=1e-3, seed=0, m=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    plant: &PyPlant,
    k: Vec<Vec<f64>>,
    ts: &PyTimeScale,
    x0: Vec<f64>,
    level: f64,
    epsilon: f64,
    policy: &str,
    dense_step: f64,
    seed: u64,
    m: Option<Vec<Vec<f64>>>,
) -> PyResult<PySimResult> {
    let n = plant.inner.state_dim();
    let m = match m {
        Some(rows) => to_dmatrix(&rows, "M")?,
        None => DMatrix::identity(n, n),
    };
    let (t0, _) = ts.inner.window();
    let mu0 = ts.inner.graininess(t0).map_err(err)?;
    let syn = core_synthesize(&plant.inner, &to_dmatrix(&k, "K")?, &m, mu0, DEADBAND_DEFAULT)
        .map_err(err)?;
    let problem =
        AvoidanceProblem::unbounded(syn.params.q.clone(), level, epsilon).map_err(err)?;
    let cfg = SimConfig {
        plant: plant.inner.clone(),
        strategy: syn.params,
        problem,
        ts: ts.inner.clone(),
        x0: DVector::from_vec(x0),
        policy: policy_from(policy)?,
        dense_step,
        seed,
    };
    let tr = core_simulate(&cfg).map_err(err)?;
    let min_v = tr.records.iter().map(|r| r.v).fold(f64::INFINITY, f64::min);
    let min_dv = tr.records.iter().map(|r| r.dv).fold(f64::INFINITY, f64::min);
    Ok(PySimResult {
        verdict: tr.verdict.to_string(),
        t: tr.records.iter().map(|r| r.t).collect(),
        x: tr.records.iter().map(|r| r.x.iter().copied().collect()).collect(),
        v: tr.records.iter().map(|r| r.v).collect(),
        dv: tr.records.iter().map(|r| r.dv).collect(),
        min_v,
        min_dv,
    })
}

/// Check both avoidance conditions on an annulus grid around the set.
#[pyfunction]
#[pyo3(signature = (plant, k, ts, level=1.0, epsilon=1.0, levels=40, angles=40,
                    pursuer_directions=64, tolerance=1e-8, m=None))]
#[allow(clippy::too_many_arguments)]
fn verify(
    plant: &PyPlant,
    k: Vec<Vec<f64>>,
    ts: &PyTimeScale,
    level: f64,
    epsilon: f64,
    levels: usize,
    angles: usize,
    pursuer_directions: usize,
    tolerance: f64,
    m: Option<Vec<Vec<f64>>>,
) -> PyResult<PyVerifyResult> {
    let n = plant.inner.state_dim();
    let m = match m {
        Some(rows) => to_dmatrix(&rows, "M")?,
        None => DMatrix::identity(n, n),
    };
    let (t0, _) = ts.inner.window();
    let mu0 = ts.inner.graininess(t0).map_err(err)?;
    let syn = core_synthesize(&plant.inner, &to_dmatrix(&k, "K")?, &m, mu0, DEADBAND_DEFAULT)
        .map_err(err)?;
    let problem =
        AvoidanceProblem::unbounded(syn.params.q.clone(), level, epsilon).map_err(err)?;
    let report = verify_conditions(
        &plant.inner,
        &syn.params,
        StrategyMode::Stabilized,
        &problem,
        &ts.inner,
        &GridSpec { levels, angles },
        pursuer_directions,
        tolerance,
    )
    .map_err(err)?;
    Ok(PyVerifyResult {
        passed: report.pass,
        condition_i_margin: report.condition_i_margin,
        condition_ii_margin: report.condition_ii_margin,
        witness_t: report.witness.t,
        witness_x: report.witness.x.iter().copied().collect(),
        witness_dv: report.witness.dv,
        points_checked: report.points_checked,
        notes: report.notes.clone(),
    })
}

/// Cauchy delta integral of a Python callable over [a, b] on the scale:
/// exact f(t) * mu(t) terms at scattered points, adaptive Simpson on
/// dense stretches.
#[pyfunction]
#[pyo3(signature = (f, ts, a, b, quad_step=1e-3))]
fn delta_integral(f: Py<PyAny>, ts: &PyTimeScale, a: f64, b: f64, quad_step: f64) -> PyResult<f64> {
    let signal = ScalarSignal::new(move |t: f64| {
        Python::attach(|py| {
            f.call1(py, (t,))
                .and_then(|v| v.extract::<f64>(py))
                .unwrap_or(f64::NAN)
        })
    });
    core_delta_integral(&signal, &ts.inner, a, b, quad_step).map_err(err)
}

#[pymodule]
fn tsavoid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTimeScale>()?;
    m.add_class::<PyPlant>()?;
    m.add_class::<PySynthesis>()?;
    m.add_class::<PySimResult>()?;
    m.add_class::<PyVerifyResult>()?;
    m.add_function(wrap_pyfunction!(lyapunov_solve, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(delta_integral, m)?)?;
    Ok(())
}
