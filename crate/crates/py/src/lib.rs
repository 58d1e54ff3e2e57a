//! Python bindings.
//!
//! Frames and simulations are Python classes; everything else comes back as
//! plain dicts and lists, built from the same serde representation the CLI
//! writes to JSON. Library errors raise `ConfigError`, `DataError` or
//! `NumericalError`, all subclasses of `CausalMatchError`.

use causal_match::dataset::{self, Schema};
use causal_match::error::ErrorClass;
use causal_match::{balance, effects, propensity, synth};
use causal_match::{CausalFrame, PotentialFrame, ScmSpec, WeightingScheme};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(causal_match_py, CausalMatchError, PyException);
create_exception!(causal_match_py, ConfigError, CausalMatchError);
create_exception!(causal_match_py, DataError, CausalMatchError);
create_exception!(causal_match_py, NumericalError, CausalMatchError);

fn py_err(e: causal_match::Error) -> PyErr {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Config => ConfigError::new_err(msg),
        ErrorClass::Data => DataError::new_err(msg),
        ErrorClass::Numerical => NumericalError::new_err(msg),
    }
}

trait OrRaise<T> {
    fn or_raise(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for causal_match::Result<T> {
    fn or_raise(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Serde value to native Python objects via the stdlib `json` module.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn scheme(name: &str, caliper: Option<f64>, with_replacement: bool, n_strata: usize) -> PyResult<WeightingScheme> {
    match name {
        "ipw" => Ok(WeightingScheme::Ipw),
        "nn" => Ok(WeightingScheme::Nn { with_replacement, caliper }),
        "subclass" => Ok(WeightingScheme::Subclass { n_strata }),
        other => Err(ConfigError::new_err(format!(
            "unknown scheme `{other}`; expected ipw, nn or subclass"
        ))),
    }
}

/// Unit-level data with a binary treatment.
#[pyclass(module = "causal_match_py", name = "Frame")]
struct Frame {
    inner: CausalFrame,
}

#[pymethods]
impl Frame {
    /// `x` holds one list per confounder.
    #[new]
    #[pyo3(signature = (a, y, x, names=None))]
    fn new(a: Vec<u8>, y: Vec<f64>, x: Vec<Vec<f64>>, names: Option<Vec<String>>) -> PyResult<Self> {
        let names = names.unwrap_or_else(|| (1..=x.len()).map(|j| format!("x{j}")).collect());
        Ok(Self { inner: CausalFrame::new(a, y, x, names).or_raise()? })
    }

    #[staticmethod]
    fn from_csv(path: &str, treatment: &str, outcome: &str, confounders: Vec<String>) -> PyResult<Self> {
        let schema = Schema::new(treatment, outcome, confounders);
        Ok(Self { inner: dataset::load_csv(path, &schema).or_raise()? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn n_treated(&self) -> usize {
        self.inner.n_treated()
    }

    #[getter]
    fn a(&self) -> Vec<u8> {
        self.inner.a().to_vec()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y().to_vec()
    }

    #[getter]
    fn confounders(&self) -> Vec<String> {
        self.inner.confounder_names().to_vec()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .confounder(name)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| ConfigError::new_err(format!("no confounder named `{name}`")))
    }

    fn select(&self, rows: Vec<usize>) -> PyResult<Self> {
        Ok(Self { inner: self.inner.select(&rows).or_raise()? })
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Frame(n={}, treated={}, confounders={:?})",
            self.inner.n(),
            self.inner.n_treated(),
            self.inner.confounder_names()
        )
    }
}

/// Draw from a structural model: observed data plus both potential outcomes.
#[pyclass(module = "causal_match_py", name = "Simulation")]
struct Simulation {
    inner: PotentialFrame,
}

#[pymethods]
impl Simulation {
    #[getter]
    fn y0(&self) -> Vec<f64> {
        self.inner.y0.clone()
    }

    #[getter]
    fn y1(&self) -> Vec<f64> {
        self.inner.y1.clone()
    }

    fn frame(&self) -> PyResult<Frame> {
        Ok(Frame { inner: self.inner.to_causal_frame().or_raise()? })
    }

    fn true_effects<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &synth::true_effects(&self.inner).or_raise()?)
    }

    fn decompose<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &effects::decompose(&self.inner).or_raise()?)
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }
}

/// `spec` is a JSON object in the same format as `simulate --spec`; `None`
/// uses the built-in three-confounder model.
#[pyfunction]
#[pyo3(signature = (n, seed=0, spec=None))]
fn simulate(n: usize, seed: u64, spec: Option<&str>) -> PyResult<Simulation> {
    let spec: ScmSpec = match spec {
        Some(text) => serde_json::from_str(text).map_err(|e| ConfigError::new_err(format!("spec: {e}")))?,
        None => ScmSpec::default(),
    };
    Ok(Simulation { inner: synth::generate(&spec, n, seed).or_raise()? })
}

#[pyfunction]
#[pyo3(signature = (spec=None))]
fn analytic_effects<'py>(py: Python<'py>, spec: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let spec: ScmSpec = match spec {
        Some(text) => serde_json::from_str(text).map_err(|e| ConfigError::new_err(format!("spec: {e}")))?,
        None => ScmSpec::default(),
    };
    to_py(py, &spec.analytic_effects().or_raise()?)
}

/// Probit propensity scores and linear predictor.
#[pyfunction]
fn estimate_ps<'py>(py: Python<'py>, frame: &Frame) -> PyResult<Bound<'py, PyAny>> {
    #[derive(Serialize)]
    struct Out<'a> {
        ps: &'a [f64],
        linear_predictor: &'a [f64],
        common_support: &'a [bool],
        coefficients: Option<&'a [f64]>,
    }
    let r = propensity::estimate_ps(&frame.inner).or_raise()?;
    to_py(
        py,
        &Out {
            ps: &r.ps,
            linear_predictor: &r.linear_predictor,
            common_support: &r.common_support,
            coefficients: r.treatment_fit.as_ref().map(|f| f.coefficients.as_slice()),
        },
    )
}

#[pyfunction]
#[pyo3(signature = (frame, scheme="ipw", caliper=None, with_replacement=true, n_strata=5))]
fn weights<'py>(
    py: Python<'py>,
    frame: &Frame,
    scheme: &str,
    caliper: Option<f64>,
    with_replacement: bool,
    n_strata: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let s = self::scheme(scheme, caliper, with_replacement, n_strata)?;
    let psr = propensity::estimate_ps(&frame.inner).or_raise()?;
    to_py(py, &s.weights(&psr, frame.inner.a()).or_raise()?)
}

/// Standardized mean differences before and after weighting.
#[pyfunction]
#[pyo3(signature = (frame, scheme="ipw", caliper=None, with_replacement=true, n_strata=5))]
fn balance_table<'py>(
    py: Python<'py>,
    frame: &Frame,
    scheme: &str,
    caliper: Option<f64>,
    with_replacement: bool,
    n_strata: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let s = self::scheme(scheme, caliper, with_replacement, n_strata)?;
    let psr = propensity::estimate_ps(&frame.inner).or_raise()?;
    let w = s.weights(&psr, frame.inner.a()).or_raise()?;
    to_py(py, &balance::balance_table(&frame.inner, &psr, &[&w]).or_raise()?)
}

#[derive(Serialize)]
struct TrialOut<'a> {
    trial_index: usize,
    naive: &'a effects::EffectEstimate,
    adjusted: &'a effects::EffectEstimate,
    matched: &'a effects::EffectEstimate,
    balance: &'a causal_match::BalanceReport,
    ess_treated: f64,
    ess_control: f64,
}

impl<'a> From<&'a effects::TrialResult> for TrialOut<'a> {
    fn from(t: &'a effects::TrialResult) -> Self {
        Self {
            trial_index: t.trial_index,
            naive: &t.naive,
            adjusted: &t.adjusted,
            matched: &t.matched,
            balance: &t.balance,
            ess_treated: t.weights.ess_treated,
            ess_control: t.weights.ess_control,
        }
    }
}

/// Naive, regression-adjusted and matched estimates on the whole frame.
#[pyfunction]
#[pyo3(signature = (frame, scheme="ipw", caliper=None, with_replacement=true, n_strata=5))]
fn analyze<'py>(
    py: Python<'py>,
    frame: &Frame,
    scheme: &str,
    caliper: Option<f64>,
    with_replacement: bool,
    n_strata: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let s = self::scheme(scheme, caliper, with_replacement, n_strata)?;
    let r = py.detach(|| effects::analyze_frame(&frame.inner, &s, 0)).or_raise()?;
    to_py(py, &TrialOut::from(&r))
}

/// Repeated analysis on random subsamples; deterministic in `seed`.
#[pyfunction]
#[pyo3(signature = (frame, n_trials, sample_size, seed=0, scheme="ipw", caliper=None, with_replacement=true, n_strata=5))]
#[allow(clippy::too_many_arguments)]
fn run_trials<'py>(
    py: Python<'py>,
    frame: &Frame,
    n_trials: usize,
    sample_size: usize,
    seed: u64,
    scheme: &str,
    caliper: Option<f64>,
    with_replacement: bool,
    n_strata: usize,
) -> PyResult<Bound<'py, PyAny>> {
    #[derive(Serialize)]
    struct Out<'a> {
        trials: Vec<TrialOut<'a>>,
        failures: &'a [effects::TrialFailure],
    }
    let s = self::scheme(scheme, caliper, with_replacement, n_strata)?;
    let r = py
        .detach(|| effects::run_trials(&frame.inner, n_trials, sample_size, seed, &s))
        .or_raise()?;
    to_py(py, &Out { trials: r.trials.iter().map(TrialOut::from).collect(), failures: &r.failures })
}

/// Within-stratum slopes of `y` on `t`, strata being quantile bins of `z`.
#[pyfunction]
#[pyo3(signature = (t, y, z, bins=50))]
fn stratified_slopes<'py>(py: Python<'py>, t: Vec<f64>, y: Vec<f64>, z: Vec<f64>, bins: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &effects::stratified_slopes(&t, &y, &z, bins).or_raise()?)
}

#[pyfunction]
#[pyo3(signature = (values, a, w=None))]
fn smd(values: Vec<f64>, a: Vec<u8>, w: Option<Vec<f64>>) -> PyResult<f64> {
    balance::smd(&values, &a, w.as_deref()).or_raise()
}

#[pyfunction]
fn weighted_quantiles(values: Vec<f64>, w: Vec<f64>, probs: Vec<f64>) -> PyResult<Vec<f64>> {
    balance::weighted_quantiles(&values, &w, &probs).or_raise()
}

/// Exact check of both score identities on a random discrete model.
#[pyfunction]
fn check_identities<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let dm = synth::DiscreteModel::random_binary(seed);
    let reports = [
        synth::check_balancing_property(&dm).or_raise()?,
        synth::check_outcome_independence(&dm).or_raise()?,
    ];
    to_py(py, &reports)
}

#[pymodule]
fn causal_match_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", causal_match::VERSION)?;
    m.add("CausalMatchError", py.get_type::<CausalMatchError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add_class::<Frame>()?;
    m.add_class::<Simulation>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_effects, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_ps, m)?)?;
    m.add_function(wrap_pyfunction!(weights, m)?)?;
    m.add_function(wrap_pyfunction!(balance_table, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(run_trials, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_slopes, m)?)?;
    m.add_function(wrap_pyfunction!(smd, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_quantiles, m)?)?;
    m.add_function(wrap_pyfunction!(check_identities, m)?)?;
    Ok(())
}
