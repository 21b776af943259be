//! Python bindings for quantile risk measures.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use ::quantile_risk as core;
use core::riskmeasures::Evaluator;
use core::{DomainClass, ExtendedRisk, Tolerances};

create_exception!(quantile_risk, QuantileRiskError, PyException);
create_exception!(quantile_risk, DomainError, QuantileRiskError);
create_exception!(quantile_risk, NotSpectralError, DomainError);
create_exception!(quantile_risk, NoCounterexampleError, DomainError);
create_exception!(quantile_risk, InconclusiveError, DomainError);

fn to_py_err(e: core::Error) -> PyErr {
    let msg = e.to_string();
    match e {
        core::Error::NotSpectral(_) => NotSpectralError::new_err(msg),
        core::Error::NoCounterexample => NoCounterexampleError::new_err(msg),
        core::Error::Inconclusive(_) => InconclusiveError::new_err(msg),
        e if e.is_domain_error() => DomainError::new_err(msg),
        _ => QuantileRiskError::new_err(msg),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| QuantileRiskError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn extended(v: ExtendedRisk) -> f64 {
    v.to_f64()
}

/// A law on the real line: finitely many atoms or a Pareto-type law and its transforms.
#[pyclass(module = "quantile_risk", frozen)]
struct Distribution {
    inner: core::Distribution,
}

#[pymethods]
impl Distribution {
    /// Empirical law of a sample; repeated values merge into weighted atoms.
    #[staticmethod]
    fn empirical(values: Vec<f64>) -> PyResult<Self> {
        core::Distribution::empirical(&values).map(Self::from).map_err(to_py_err)
    }

    /// Finite law from `(value, probability)` pairs.
    #[staticmethod]
    fn atoms(pairs: Vec<(f64, f64)>) -> PyResult<Self> {
        core::Distribution::atoms(&pairs).map(Self::from).map_err(to_py_err)
    }

    #[staticmethod]
    fn point_mass(value: f64) -> PyResult<Self> {
        core::Distribution::point_mass(value).map(Self::from).map_err(to_py_err)
    }

    /// `F(x) = (scale / -x)^index` on `x < -scale`.
    #[staticmethod]
    #[pyo3(signature = (scale, index = 2.0))]
    fn pareto_negative(scale: f64, index: f64) -> PyResult<Self> {
        core::Distribution::pareto_negative_with_index(scale, index)
            .map(Self::from)
            .map_err(to_py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (tail_index, scale = 1.0))]
    fn pareto_positive(tail_index: f64, scale: f64) -> PyResult<Self> {
        core::Distribution::pareto_positive(tail_index, scale)
            .map(Self::from)
            .map_err(to_py_err)
    }

    /// Parses the JSON distribution schema used by the command-line tool.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        core::io::parse_distribution_json(text).map(Self::from).map_err(to_py_err)
    }

    /// Loads a CSV sample, a JSON file or inline JSON.
    #[staticmethod]
    fn load(arg: &str) -> PyResult<Self> {
        core::io::load_distribution(arg).map(Self::from).map_err(to_py_err)
    }

    fn to_json(&self) -> String {
        core::io::distribution_to_json(&self.inner)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x)
    }

    fn sf(&self, x: f64) -> f64 {
        self.inner.sf(x)
    }

    fn quantile_lower(&self, u: f64) -> PyResult<f64> {
        self.inner.quantile_lower(u).map_err(to_py_err)
    }

    fn quantile_upper(&self, u: f64) -> PyResult<f64> {
        self.inner.quantile_upper(u).map_err(to_py_err)
    }

    fn support(&self) -> (f64, f64) {
        self.inner.support()
    }

    fn is_discrete(&self) -> bool {
        self.inner.is_discrete()
    }

    fn scale(&self, a: f64) -> PyResult<Self> {
        self.inner.scale(a).map(Self::from).map_err(to_py_err)
    }

    fn shift(&self, c: f64) -> PyResult<Self> {
        self.inner.shift(c).map(Self::from).map_err(to_py_err)
    }

    fn positive_part(&self) -> Self {
        self.inner.positive_part().into()
    }

    fn negative_part(&self) -> Self {
        self.inner.negative_part().into()
    }

    fn abs(&self) -> Self {
        self.inner.abs().into()
    }

    /// Law of `X + Y` for comonotone `X` and `Y`.
    fn comonotone_sum(&self, other: &Distribution) -> Self {
        self.inner.comonotone_sum(&other.inner).into()
    }

    fn __repr__(&self) -> String {
        format!("Distribution({})", self.inner.describe())
    }
}

impl From<core::Distribution> for Distribution {
    fn from(inner: core::Distribution) -> Self {
        Distribution { inner }
    }
}

/// Increasing right-continuous `D` on `[0, 1]` with `D(0) = 0` and `D(1-) = 1`.
#[pyclass(module = "quantile_risk", frozen)]
struct Distortion {
    inner: core::Distortion,
}

#[pymethods]
impl Distortion {
    #[staticmethod]
    fn expectation() -> Self {
        core::Distortion::expectation().into()
    }

    #[staticmethod]
    fn value_at_risk(alpha: f64) -> PyResult<Self> {
        core::Distortion::value_at_risk(alpha).map(Self::from).map_err(to_py_err)
    }

    #[staticmethod]
    fn expected_shortfall(alpha: f64) -> PyResult<Self> {
        core::Distortion::expected_shortfall(alpha).map(Self::from).map_err(to_py_err)
    }

    #[staticmethod]
    fn expected_shortfall_order(n: u32, alpha: f64) -> PyResult<Self> {
        core::Distortion::expected_shortfall_order(n, alpha)
            .map(Self::from)
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn threshold(delta: f64) -> PyResult<Self> {
        core::Distortion::threshold(delta).map(Self::from).map_err(to_py_err)
    }

    #[staticmethod]
    fn sqrt_example() -> Self {
        core::Distortion::sqrt_example().into()
    }

    /// Parses the JSON distortion schema used by the command-line tool.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        core::io::parse_distortion_json(text).map(Self::from).map_err(to_py_err)
    }

    fn to_json(&self) -> String {
        core::io::distortion_to_json(&self.inner)
    }

    fn __call__(&self, u: f64) -> f64 {
        self.inner.eval(u)
    }

    fn left_limit(&self, u: f64) -> f64 {
        self.inner.left_limit(u)
    }

    fn is_convex(&self) -> bool {
        self.inner.is_convex()
    }

    /// `{"convex": bool, "witness": {"u", "eps", "excess"} | None}`.
    fn convexity<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize(py, &self.inner.convexity())
    }

    /// Spectral density `s` with `D(u) = int_0^u s`; raises `NotSpectralError` for non-convex `D`.
    fn spectral_density(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        let s = self.inner.spectral().map_err(to_py_err)?;
        Ok(u.into_iter().map(|x| s.eval(x)).collect())
    }

    /// `D` rebuilt by integrating its spectral density.
    fn spectral_round_trip(&self) -> PyResult<Self> {
        let s = self.inner.spectral().map_err(to_py_err)?;
        s.distortion().map(Self::from).map_err(to_py_err)
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label()
    }

    fn __repr__(&self) -> String {
        format!("Distortion({})", self.inner.label())
    }
}

impl From<core::Distortion> for Distortion {
    fn from(inner: core::Distortion) -> Self {
        Distortion { inner }
    }
}

/// Evaluates risk measures with fixed numerical tolerances.
#[pyclass(module = "quantile_risk", name = "Evaluator", frozen)]
struct PyEvaluator {
    inner: Evaluator,
}

#[pymethods]
impl PyEvaluator {
    #[new]
    #[pyo3(signature = (quadrature = None, mixture = None, infimum = None, probe_cauchy = None, probe_growth = None))]
    fn new(
        quadrature: Option<f64>,
        mixture: Option<f64>,
        infimum: Option<f64>,
        probe_cauchy: Option<f64>,
        probe_growth: Option<f64>,
    ) -> PyResult<Self> {
        let d = Tolerances::default();
        let tol = Tolerances {
            quadrature: quadrature.unwrap_or(d.quadrature),
            mixture: mixture.unwrap_or(d.mixture),
            infimum: infimum.unwrap_or(d.infimum),
            probe_cauchy: probe_cauchy.unwrap_or(d.probe_cauchy),
            probe_growth: probe_growth.unwrap_or(d.probe_growth),
        };
        Ok(PyEvaluator {
            inner: Evaluator::new(tol).map_err(to_py_err)?,
        })
    }

    /// `int F^{<-} dQ`; `-inf` or `inf` outside the finite range.
    fn rho_quantile(&self, py: Python<'_>, dist: &Distribution, d: &Distortion) -> PyResult<f64> {
        py.detach(|| self.inner.rho_quantile(&dist.inner, &d.inner))
            .map(extended)
            .map_err(to_py_err)
    }

    fn rho_choquet(&self, py: Python<'_>, dist: &Distribution, d: &Distortion) -> PyResult<f64> {
        py.detach(|| self.inner.rho_choquet(&dist.inner, &d.inner))
            .map(extended)
            .map_err(to_py_err)
    }

    fn rho_mixture(&self, py: Python<'_>, dist: &Distribution, d: &Distortion) -> PyResult<f64> {
        py.detach(|| self.inner.rho_mixture(&dist.inner, &d.inner))
            .map(extended)
            .map_err(to_py_err)
    }

    fn expected_shortfall(&self, py: Python<'_>, dist: &Distribution, alpha: f64) -> PyResult<f64> {
        py.detach(|| self.inner.expected_shortfall(&dist.inner, alpha))
            .map(extended)
            .map_err(to_py_err)
    }

    /// `(value, minimizer)` of `c + E[(X - c)^+] / (1 - alpha)`.
    fn expected_shortfall_infimum(&self, py: Python<'_>, dist: &Distribution, alpha: f64) -> PyResult<(f64, f64)> {
        py.detach(|| self.inner.expected_shortfall_infimum(&dist.inner, alpha))
            .map(|r| (r.value, r.minimizer))
            .map_err(to_py_err)
    }

    /// `E[(X - c)^+]`, `inf` when `E[X^+]` diverges.
    fn stop_loss(&self, py: Python<'_>, dist: &Distribution, c: f64) -> PyResult<f64> {
        py.detach(|| self.inner.stop_loss(&dist.inner, c))
            .map(|v| v.unwrap_or(f64::INFINITY))
            .map_err(to_py_err)
    }

    /// Membership verdict for class `"LQ"`, `"Acerbi"` or `"Pichler"`.
    fn classify<'py>(
        &self,
        py: Python<'py>,
        dist: &Distribution,
        d: &Distortion,
        class: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let class: DomainClass = class.parse().map_err(|e: core::Error| PyValueError::new_err(e.to_string()))?;
        let v = py.detach(|| self.inner.classify(&dist.inner, &d.inner, class));
        serialize(py, &v)
    }
}

fn default_evaluator() -> PyEvaluator {
    PyEvaluator {
        inner: Evaluator::default(),
    }
}

#[pyfunction]
fn rho_quantile(py: Python<'_>, dist: &Distribution, d: &Distortion) -> PyResult<f64> {
    default_evaluator().rho_quantile(py, dist, d)
}

#[pyfunction]
fn rho_choquet(py: Python<'_>, dist: &Distribution, d: &Distortion) -> PyResult<f64> {
    default_evaluator().rho_choquet(py, dist, d)
}

#[pyfunction]
fn rho_mixture(py: Python<'_>, dist: &Distribution, d: &Distortion) -> PyResult<f64> {
    default_evaluator().rho_mixture(py, dist, d)
}

#[pyfunction]
fn expected_shortfall(py: Python<'_>, dist: &Distribution, alpha: f64) -> PyResult<f64> {
    default_evaluator().expected_shortfall(py, dist, alpha)
}

#[pyfunction]
fn value_at_risk(dist: &Distribution, alpha: f64) -> PyResult<f64> {
    dist.inner.quantile_lower(alpha).map_err(to_py_err)
}

#[pyfunction]
fn classify<'py>(py: Python<'py>, dist: &Distribution, d: &Distortion, class: &str) -> PyResult<Bound<'py, PyAny>> {
    default_evaluator().classify(py, dist, d, class)
}

/// Joint table of `(X, Y)` with `rho[X + Y] > rho[X] + rho[Y]` for non-convex `D`.
#[pyfunction]
#[pyo3(signature = (d, a = 1.0))]
fn build_counterexample<'py>(py: Python<'py>, d: &Distortion, a: f64) -> PyResult<Bound<'py, PyAny>> {
    let report = core::properties::build_counterexample(&d.inner, a).map_err(to_py_err)?;
    serialize(py, &report)
}

/// Seeded random search for subadditivity violations.
#[pyfunction]
#[pyo3(signature = (d, trials = 10_000, seed = 0))]
fn subadditivity_search<'py>(py: Python<'py>, d: &Distortion, trials: u64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(|| core::properties::subadditivity_search(&d.inner, trials, seed));
    serialize(py, &report)
}

/// Ordering evidence for the domains of `d1` and `d2` on `[delta, 1)`.
#[pyfunction]
#[pyo3(signature = (d1, d2, delta = 0.5))]
fn compare_domains<'py>(py: Python<'py>, d1: &Distortion, d2: &Distortion, delta: f64) -> PyResult<Bound<'py, PyAny>> {
    let c = core::riskmeasures::compare_domains(&d1.inner, &d2.inner, delta).map_err(to_py_err)?;
    serialize(py, &c)
}

#[pymodule]
#[pyo3(name = "quantile_risk")]
fn quantile_risk_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<Distribution>()?;
    m.add_class::<Distortion>()?;
    m.add_class::<PyEvaluator>()?;
    m.add_function(wrap_pyfunction!(rho_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(rho_choquet, m)?)?;
    m.add_function(wrap_pyfunction!(rho_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(expected_shortfall, m)?)?;
    m.add_function(wrap_pyfunction!(value_at_risk, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(build_counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(subadditivity_search, m)?)?;
    m.add_function(wrap_pyfunction!(compare_domains, m)?)?;
    m.add("QuantileRiskError", py.get_type::<QuantileRiskError>())?;
    m.add("DomainError", py.get_type::<DomainError>())?;
    m.add("NotSpectralError", py.get_type::<NotSpectralError>())?;
    m.add("NoCounterexampleError", py.get_type::<NoCounterexampleError>())?;
    m.add("InconclusiveError", py.get_type::<InconclusiveError>())?;
    Ok(())
}
