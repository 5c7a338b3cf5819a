//! Python bindings. Parameter errors raise `ValueError`, numerical failures
//! raise `ArithmeticError`, and everything else raises `RuntimeError`.

use fracsmooth::chaos::{self, BesovConfig, ChaosExpansion, Indicator};
use fracsmooth::hedging;
use fracsmooth::ratefit::{self, RateFit, RatePoint};
use fracsmooth::smoothness::{self, SmoothnessConfig, SupExponents};
use fracsmooth::weaklimit::{self, ClockConfig};
use fracsmooth::{Error, Measure};
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. } | Error::NonIncreasingGrid { .. } | Error::InsufficientData(_) => {
            PyValueError::new_err(e.to_string())
        }
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn measure(name: &str) -> PyResult<Measure> {
    name.parse().map_err(to_py)
}

/// Geometric Brownian motion `dS = S (mu dt + sigma dW)` on `[0, T]`.
#[pyclass(name = "MarketModel", frozen)]
struct PyModel(fracsmooth::MarketModel);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (s0 = 1.0, sigma = 1.0, mu = 0.0, maturity = 1.0))]
    fn new(s0: f64, sigma: f64, mu: f64, maturity: f64) -> PyResult<Self> {
        fracsmooth::MarketModel::new(s0, sigma, mu, maturity).map(Self).map_err(to_py)
    }

    #[getter]
    fn s0(&self) -> f64 {
        self.0.s0
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }
    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }
    #[getter]
    fn maturity(&self) -> f64 {
        self.0.maturity
    }

    fn __repr__(&self) -> String {
        let m = &self.0;
        format!("MarketModel(s0={}, sigma={}, mu={}, maturity={})", m.s0, m.sigma, m.mu, m.maturity)
    }
}

#[pyclass(name = "Payoff", frozen)]
struct PyPayoff(fracsmooth::Payoff);

#[pymethods]
impl PyPayoff {
    #[staticmethod]
    fn binary(strike: f64) -> PyResult<Self> {
        fracsmooth::Payoff::binary(strike).map(Self).map_err(to_py)
    }
    #[staticmethod]
    fn call(strike: f64) -> PyResult<Self> {
        fracsmooth::Payoff::call(strike).map(Self).map_err(to_py)
    }
    #[staticmethod]
    fn put(strike: f64) -> PyResult<Self> {
        fracsmooth::Payoff::put(strike).map(Self).map_err(to_py)
    }
    /// `((S - K)^+)^exponent`.
    #[staticmethod]
    fn power(strike: f64, exponent: f64) -> PyResult<Self> {
        fracsmooth::Payoff::power_holder(strike, exponent).map(Self).map_err(to_py)
    }
    #[staticmethod]
    fn affine(c0: f64, c1: f64) -> PyResult<Self> {
        fracsmooth::Payoff::affine(c0, c1).map(Self).map_err(to_py)
    }
    #[staticmethod]
    fn constant(c: f64) -> PyResult<Self> {
        fracsmooth::Payoff::constant(c).map(Self).map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind_name()
    }

    fn eval(&self, s: f64) -> PyResult<f64> {
        self.0.eval(s).map_err(to_py)
    }

    fn price(&self, model: &PyModel, t: f64, s: f64) -> PyResult<f64> {
        self.0.price(&model.0, t, s).map_err(to_py)
    }

    fn delta(&self, model: &PyModel, t: f64, s: f64) -> PyResult<f64> {
        self.0.delta(&model.0, t, s).map_err(to_py)
    }

    fn gamma(&self, model: &PyModel, t: f64, s: f64) -> PyResult<f64> {
        self.0.gamma(&model.0, t, s).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Payoff.{}", self.0.kind_name())
    }
}

#[pyclass(name = "TimeNet", frozen)]
struct PyTimeNet(fracsmooth::TimeNet);

#[pymethods]
impl PyTimeNet {
    /// `t_k = T (1 - (1 - k/n)^{1/theta})`.
    #[new]
    #[pyo3(signature = (n, theta = 1.0, maturity = 1.0))]
    fn new(n: usize, theta: f64, maturity: f64) -> PyResult<Self> {
        fracsmooth::TimeNet::theta_net(n, theta, maturity).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_nodes(nodes: Vec<f64>) -> PyResult<Self> {
        fracsmooth::TimeNet::from_nodes(nodes).map(Self).map_err(to_py)
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.0.nodes().to_vec()
    }
    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }
    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta()
    }
    fn mesh(&self) -> f64 {
        self.0.mesh()
    }
    fn __len__(&self) -> usize {
        self.0.nodes().len()
    }
}

/// Terminal tracking errors `C_T`, one per path.
#[pyfunction]
#[pyo3(signature = (payoff, model, net, m, seed = 0, measure = "martingale"))]
fn tracking_errors(
    py: Python<'_>,
    payoff: &PyPayoff,
    model: &PyModel,
    net: &PyTimeNet,
    m: usize,
    seed: u64,
    measure: &str,
) -> PyResult<Vec<f64>> {
    let ms = self::measure(measure)?;
    py.detach(|| hedging::tracking_error_terminal(&payoff.0, &model.0, &net.0, m, seed, ms))
        .map(|s| s.terminal_errors)
        .map_err(to_py)
}

/// `(l2_error, stderr)` of the terminal tracking error.
#[pyfunction]
#[pyo3(signature = (payoff, model, net, m, seed = 0, measure = "martingale"))]
fn l2_tracking_error(
    py: Python<'_>,
    payoff: &PyPayoff,
    model: &PyModel,
    net: &PyTimeNet,
    m: usize,
    seed: u64,
    measure: &str,
) -> PyResult<(f64, f64)> {
    let ms = self::measure(measure)?;
    py.detach(|| hedging::l2_tracking_error(&payoff.0, &model.0, &net.0, m, seed, ms))
        .map(|e| (e.l2_error, e.stderr))
        .map_err(to_py)
}

fn fit_dict<'py>(py: Python<'py>, fit: &RateFit) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("slope", fit.slope)?;
    d.set_item("slope_lo", fit.slope_lo)?;
    d.set_item("slope_hi", fit.slope_hi)?;
    d.set_item("r2", fit.r_squared)?;
    d.set_item("intercept", fit.intercept)?;
    d.set_item("reduced_chi2", fit.reduced_chi2)?;
    Ok(d)
}

/// Weighted log-log fit of `error ~ n^slope`.
#[pyfunction]
#[pyo3(signature = (n, error, stderr = None))]
fn fit_rate<'py>(py: Python<'py>, n: Vec<usize>, error: Vec<f64>, stderr: Option<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let stderr = stderr.unwrap_or_else(|| vec![0.0; n.len()]);
    if n.len() != error.len() || n.len() != stderr.len() {
        return Err(PyValueError::new_err("n, error and stderr must have equal lengths"));
    }
    let pts: Vec<RatePoint> = n
        .iter()
        .zip(&error)
        .zip(&stderr)
        .map(|((&n, &error), &stderr)| RatePoint { n, error, stderr })
        .collect();
    let fit = ratefit::fit_rate(&pts).map_err(to_py)?;
    fit_dict(py, &fit)
}

/// Tracking errors on theta-nets over `n_list` with the fitted rate under `"fit"`.
#[pyfunction]
#[pyo3(signature = (payoff, model, theta, n_list, m, seed = 0, measure = "martingale"))]
#[allow(clippy::too_many_arguments)]
fn hedge_sweep<'py>(
    py: Python<'py>,
    payoff: &PyPayoff,
    model: &PyModel,
    theta: f64,
    n_list: Vec<usize>,
    m: usize,
    seed: u64,
    measure: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let ms = self::measure(measure)?;
    let sw = py
        .detach(|| ratefit::sweep(&payoff.0, &model.0, theta, &n_list, m, seed, ms))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("n", sw.points.iter().map(|p| p.n).collect::<Vec<_>>())?;
    d.set_item("l2_error", sw.points.iter().map(|p| p.l2_error).collect::<Vec<_>>())?;
    d.set_item("stderr", sw.points.iter().map(|p| p.stderr).collect::<Vec<_>>())?;
    d.set_item("m", sw.points.iter().map(|p| p.m).collect::<Vec<_>>())?;
    d.set_item("fit", fit_dict(py, &sw.fit)?)?;
    Ok(d)
}

/// `D(t)`, `E|grad u|^2` and `E|D^2 u|^2` on a dyadic grid approaching `T`,
/// with the sup-type exponent readings.
#[pyfunction]
#[pyo3(signature = (payoff, model, depth = 24))]
fn smoothness_curves<'py>(py: Python<'py>, payoff: &PyPayoff, model: &PyModel, depth: usize) -> PyResult<Bound<'py, PyDict>> {
    let grid = smoothness::default_t_grid(model.0.maturity, depth);
    let c = py
        .detach(|| smoothness::smoothness_curves(&payoff.0, &model.0, &grid, &SmoothnessConfig::default()))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("t", c.t_grid.clone())?;
    d.set_item("decay", c.decay.clone())?;
    d.set_item("grad_sq", c.grad_sq.clone())?;
    d.set_item("hess_sq", c.hess_sq.clone())?;
    match SupExponents::from_curves(&c) {
        Ok(s) => {
            d.set_item("theta_hat", s.from_decay)?;
            d.set_item("sup_exponents", s.all().to_vec())?;
        }
        Err(Error::InfiniteSmoothness) => {
            d.set_item("theta_hat", py.None())?;
            d.set_item("sup_exponents", py.None())?;
        }
        Err(e) => return Err(to_py(e)),
    }
    Ok(d)
}

/// `(value, finite)` of the truncated Besov integral down to `T - delta`.
#[pyfunction]
#[pyo3(signature = (payoff, model, theta, delta = 1e-7))]
fn b22_integral(py: Python<'_>, payoff: &PyPayoff, model: &PyModel, theta: f64, delta: f64) -> PyResult<(f64, bool)> {
    py.detach(|| smoothness::b22_integral(&payoff.0, &model.0, theta, delta))
        .map(|i| (i.value, i.finite))
        .map_err(to_py)
}

/// Hermite chaos coefficients of `1_{[a, inf)}` up to `order`.
#[pyfunction]
fn indicator_chaos(a: f64, order: usize) -> Vec<f64> {
    ChaosExpansion::indicator(a, order).alpha
}

/// `sqrt(sum (n+1) alpha_n^2)`.
#[pyfunction]
fn d12_norm(alpha: Vec<f64>) -> f64 {
    chaos::d12_norm(&ChaosExpansion::from_coefficients(alpha)).value
}

/// Besov criterion for `1_{[a, inf)}`: `(t, phi)` pairs and the bounded verdict.
#[pyfunction]
#[pyo3(signature = (a, theta, depth = 24))]
fn indicator_besov(py: Python<'_>, a: f64, theta: f64, depth: usize) -> PyResult<(Vec<(f64, f64)>, bool)> {
    let grid = chaos::unit_interval_grid(depth);
    let c = py
        .detach(|| chaos::besov_criterion(&Indicator { threshold: a }, theta, &grid, &BesovConfig::default()))
        .map_err(to_py)?;
    Ok((c.points.iter().map(|p| (p.t, p.phi)).collect(), c.bounded))
}

/// Per-path clock `A` (unit maturity) plus the tail verdict.
#[pyfunction]
#[pyo3(signature = (payoff, model, theta, m, seed = 0))]
fn clock_a<'py>(py: Python<'py>, payoff: &PyPayoff, model: &PyModel, theta: f64, m: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let c = py
        .detach(|| weaklimit::clock_a(&payoff.0, &model.0, theta, m, seed, &ClockConfig::default()))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("a", c.a_values.clone())?;
    d.set_item("mean", c.mean())?;
    d.set_item("flagged_fraction", c.flagged_fraction())?;
    d.set_item("tail_finite", c.tail_verdict().finite)?;
    d.set_item("mixed_normal", weaklimit::mixed_normal_sample(&c, seed))?;
    Ok(d)
}

/// Two-sample Kolmogorov–Smirnov statistic.
#[pyfunction]
fn ks_distance(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    weaklimit::ks_distance(&x, &y).map_err(to_py)
}

/// `sqrt(n) C_T` on a theta-net.
#[pyfunction]
#[pyo3(signature = (payoff, model, n, theta, m, seed = 0))]
fn rescaled_terminal_errors(
    py: Python<'_>,
    payoff: &PyPayoff,
    model: &PyModel,
    n: usize,
    theta: f64,
    m: usize,
    seed: u64,
) -> PyResult<Vec<f64>> {
    py.detach(|| weaklimit::rescaled_terminal_errors(&payoff.0, &model.0, n, theta, m, seed))
        .map_err(to_py)
}

#[pymodule(name = "fracsmooth")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPayoff>()?;
    m.add_class::<PyTimeNet>()?;
    m.add_function(wrap_pyfunction!(tracking_errors, m)?)?;
    m.add_function(wrap_pyfunction!(l2_tracking_error, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(hedge_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(smoothness_curves, m)?)?;
    m.add_function(wrap_pyfunction!(b22_integral, m)?)?;
    m.add_function(wrap_pyfunction!(indicator_chaos, m)?)?;
    m.add_function(wrap_pyfunction!(d12_norm, m)?)?;
    m.add_function(wrap_pyfunction!(indicator_besov, m)?)?;
    m.add_function(wrap_pyfunction!(clock_a, m)?)?;
    m.add_function(wrap_pyfunction!(ks_distance, m)?)?;
    m.add_function(wrap_pyfunction!(rescaled_terminal_errors, m)?)?;
    Ok(())
}
