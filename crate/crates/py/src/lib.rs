use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use reshuffle::config::{Method, RunConfig};
use reshuffle::linalg::Vector;
use reshuffle::objective::{self, FiniteSumProblem};
use reshuffle::{engine, harness, oracles, StepsizeSchedule};

fn py_err(e: reshuffle::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn schedule(r: f64, s: f64) -> PyResult<StepsizeSchedule> {
    StepsizeSchedule::new(r, s).map_err(py_err)
}

#[pyclass(name = "Problem", module = "reshuffle_py", frozen)]
struct PyProblem {
    inner: FiniteSumProblem,
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    fn example1() -> Self {
        Self { inner: FiniteSumProblem::example1() }
    }

    /// One of `example1`, `quad-seed7`, `smooth-seed1`.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        Ok(Self { inner: objective::fixture(name).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: FiniteSumProblem::from_json(text).map_err(py_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (n, m, c=1.0, seed=0))]
    fn random_quadratic(n: usize, m: usize, c: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: objective::make_quadratic_problem(n, m, c, seed).map_err(py_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (n, m, c=1.0, seed=0))]
    fn random_smooth(n: usize, m: usize, c: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: objective::make_smooth_problem(n, m, c, seed).map_err(py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn optimum(&self) -> Vec<f64> {
        to_vec(self.inner.optimum())
    }

    #[getter]
    fn hessian_at_optimum(&self) -> Vec<Vec<f64>> {
        self.inner.hessian_at_optimum().row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let k = self.inner.constants();
        let d = PyDict::new(py);
        d.set_item("c", k.c)?;
        d.set_item("L", k.l)?;
        d.set_item("G_star", k.g_star)?;
        d.set_item("U", k.u)?;
        d.set_item("M_gamma_bound", k.m_gamma_bound)?;
        Ok(d)
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.value(&self.vector(x)?))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(to_vec(&self.inner.gradient(&self.vector(x)?)))
    }

    fn objective_gap(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.objective_gap(&self.vector(x)?))
    }

    fn mu_star(&self) -> Vec<f64> {
        to_vec(&oracles::mu_star(&self.inner))
    }

    /// `v(σ)` for a zero-based order.
    fn v_of_sigma(&self, sigma: Vec<usize>) -> PyResult<Vec<f64>> {
        Ok(to_vec(&oracles::v_of_sigma(&self.inner, &sigma).map_err(py_err)?))
    }

    fn permutation_mean_v(&self) -> PyResult<Vec<f64>> {
        Ok(to_vec(&oracles::permutation_mean_v(&self.inner).map_err(py_err)?))
    }

    fn m_gamma(&self) -> PyResult<f64> {
        Ok(oracles::m_gamma(&self.inner).map_err(py_err)?.value)
    }

    #[pyo3(name = "averaged_limit", signature = (r, s, q))]
    fn averaged_limit_py(&self, r: f64, s: f64, q: f64) -> PyResult<Vec<f64>> {
        let lim = oracles::averaged_limit(&self.inner, &schedule(r, s)?, q).map_err(py_err)?;
        Ok(to_vec(&lim))
    }

    fn __repr__(&self) -> String {
        format!("Problem(kind={:?}, m={}, n={})", self.inner.kind(), self.inner.m(), self.inner.dim())
    }
}

impl PyProblem {
    fn vector(&self, x: Vec<f64>) -> PyResult<Vector> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!(
                "expected a vector of length {}, got {}",
                self.inner.dim(),
                x.len()
            )));
        }
        Ok(Vector::from_vec(x))
    }
}

#[pyclass(name = "Trajectory", module = "reshuffle_py", frozen, get_all)]
struct PyTrajectory {
    k: Vec<usize>,
    dist: Vec<f64>,
    f_gap: Vec<f64>,
    xbar_dist: Vec<f64>,
    xbar_f_gap: Vec<f64>,
    alpha_bar: Vec<f64>,
    final_iterate: Vec<f64>,
}

#[pymethods]
impl PyTrajectory {
    fn __len__(&self) -> usize {
        self.k.len()
    }
}

fn column(t: &engine::Trajectory, name: &str) -> PyResult<Vec<f64>> {
    t.column(name).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (problem, method, r, s, k, q=1.0, seed=0, log_stride=1, x0=None, sigma=None))]
#[allow(clippy::too_many_arguments)]
fn run(
    problem: &PyProblem,
    method: &str,
    r: f64,
    s: f64,
    k: usize,
    q: f64,
    seed: u64,
    log_stride: usize,
    x0: Option<Vec<f64>>,
    sigma: Option<Vec<usize>>,
) -> PyResult<PyTrajectory> {
    let method: Method = method.parse().map_err(py_err)?;
    let mut config = RunConfig::new(method, schedule(r, s)?, q, k, seed).with_log_stride(log_stride);
    if let Some(x0) = x0 {
        config = config.with_x0(problem.vector(x0)?);
    }
    if let Some(sigma) = sigma {
        config = config.with_sigma(sigma);
    }
    let t = engine::run(&problem.inner, &config).map_err(py_err)?;
    Ok(PyTrajectory {
        k: t.cycles(),
        dist: column(&t, "dist")?,
        f_gap: column(&t, "f_gap")?,
        xbar_dist: column(&t, "xbar_dist")?,
        xbar_f_gap: column(&t, "xbar_f_gap")?,
        alpha_bar: column(&t, "alpha_bar")?,
        final_iterate: to_vec(&t.final_iterate),
    })
}

/// BIRR output and diagnostics as a dict.
#[pyfunction]
#[pyo3(signature = (problem, r, s, q, k, seed=0))]
fn birr<'py>(py: Python<'py>, problem: &PyProblem, r: f64, s: f64, q: f64, k: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let config = RunConfig::new(Method::Birr, schedule(r, s)?, q, k, seed).with_log_stride(k.max(1));
    let out = reshuffle::birr_run(&problem.inner, &config).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("output", to_vec(&out.output))?;
    d.set_item("suffix_average", to_vec(&out.suffix_average))?;
    d.set_item("bias_estimate", to_vec(&out.bias_estimate))?;
    d.set_item("alpha_bar", out.alpha_bar)?;
    d.set_item("output_dist", out.output_dist)?;
    d.set_item("suffix_dist", out.suffix_dist)?;
    d.set_item("output_f_gap", out.output_f_gap)?;
    d.set_item("suffix_f_gap", out.suffix_f_gap)?;
    Ok(d)
}

#[pyfunction]
fn fit_rate<'py>(py: Python<'py>, ks: Vec<f64>, values: Vec<f64>, kmin: f64, kmax: f64) -> PyResult<Bound<'py, PyDict>> {
    let fit = harness::fit_rate(&ks, &values, (kmin, kmax)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("slope", fit.slope)?;
    d.set_item("intercept", fit.intercept)?;
    d.set_item("r_squared", fit.r_squared)?;
    d.set_item("window", fit.window)?;
    d.set_item("n_points", fit.n_points)?;
    Ok(d)
}

#[pyfunction]
fn a_q_s(r: f64, s: f64, q: f64) -> PyResult<f64> {
    oracles::a_q_s(r, s, q).map_err(py_err)
}

#[pyfunction]
fn zeta_stepsize_sum(r: f64, s: f64, k: usize) -> PyResult<f64> {
    oracles::zeta_stepsize_sum(&schedule(r, s)?, k).map_err(py_err)
}

#[pymodule]
fn reshuffle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(birr, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(a_q_s, m)?)?;
    m.add_function(wrap_pyfunction!(zeta_stepsize_sum, m)?)?;
    Ok(())
}
