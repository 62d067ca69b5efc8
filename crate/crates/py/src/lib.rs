//! Python bindings for the randomness-amplification toolkit: thresholds,
//! bound chains, chain boxes, the acceptance linear program with its
//! certificates, and the protocol simulator.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use randamp::amplification_bounds as bounds;
use randamp::attack_lp;
use randamp::boxes;
use randamp::protocol_sim as sim;
use randamp::sv_source;

fn value_err(e: randamp::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Convert any serializable value into native Python objects through its
/// JSON form.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_value(value)
        .map_err(|e| PyValueError::new_err(format!("serialization failed: {e}")))?;
    json_to_py(py, &json)
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
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
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn sv(epsilon: f64) -> PyResult<sv_source::SvParameter> {
    sv_source::SvParameter::new(epsilon).map_err(value_err)
}

#[pyfunction]
fn threshold_epsilon1() -> f64 {
    bounds::threshold_epsilon1()
}

#[pyfunction]
fn threshold_ky_fan() -> f64 {
    bounds::threshold_ky_fan()
}

#[pyfunction]
fn entropy_constant() -> f64 {
    bounds::solve_entropy_constant()
}

#[pyfunction]
#[pyo3(signature = (m_exponent = 1.99))]
fn threshold_epsilon2(m_exponent: f64) -> f64 {
    attack_lp::threshold_epsilon2(m_exponent)
}

#[pyfunction]
fn delta_q(n: usize) -> f64 {
    boxes::delta_q(n)
}

#[pyfunction]
fn setting_prob_bounds<'py>(
    py: Python<'py>,
    epsilon: f64,
    r_bits: u32,
    n_settings: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let b = sv_source::setting_prob_bounds(sv(epsilon)?, r_bits, n_settings).map_err(value_err)?;
    to_py(py, &b)
}

#[pyfunction]
fn ky_fan_bounds<'py>(py: Python<'py>, epsilon: f64, r_bits: u32) -> PyResult<Bound<'py, PyAny>> {
    let b = sv_source::ky_fan_bounds(sv(epsilon)?, r_bits).map_err(value_err)?;
    to_py(py, &b)
}

#[pyfunction]
#[pyo3(signature = (epsilon, r_bits, ky_fan = false))]
fn bound_chain<'py>(
    py: Python<'py>,
    epsilon: f64,
    r_bits: u32,
    ky_fan: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let chain = bounds::bound_chain(sv(epsilon)?, r_bits, ky_fan).map_err(value_err)?;
    to_py(py, &chain)
}

#[pyfunction]
#[pyo3(signature = (epsilon, count, strategy = "uniform", seed = 0, table = None))]
fn sample_sv_bits(
    epsilon: f64,
    count: i64,
    strategy: &str,
    seed: u64,
    table: Option<Vec<f64>>,
) -> PyResult<(Vec<u8>, Vec<f64>)> {
    let strategy = match (strategy, table) {
        ("uniform", None) => sv_source::BiasStrategy::Uniform,
        ("extremal_bernoulli", None) => sv_source::BiasStrategy::ExtremalBernoulli,
        ("adversarial_table", Some(t)) => sv_source::BiasStrategy::AdversarialTable(t),
        ("adversarial_table", None) => {
            return Err(PyValueError::new_err(
                "adversarial_table strategy needs a table",
            ))
        }
        (other, _) => return Err(PyValueError::new_err(format!("unknown strategy '{other}'"))),
    };
    let s = sv_source::sample_sv_bits(sv(epsilon)?, count, strategy, seed).map_err(value_err)?;
    Ok((s.bits, s.probs))
}

/// Per-edge joint outcome distribution on the chain of settings.
#[pyclass(name = "ChainBox", from_py_object)]
#[derive(Clone)]
struct PyChainBox {
    inner: boxes::ChainBox,
}

#[pymethods]
impl PyChainBox {
    /// Perfect correlations with one anti-correlated closing edge.
    #[staticmethod]
    fn ideal(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: boxes::ideal_box(n).map_err(value_err)?,
        })
    }

    /// Ideal box with one flipped edge.
    #[staticmethod]
    fn bad(n: usize, contradiction_edge: usize) -> PyResult<Self> {
        Ok(Self {
            inner: boxes::bad_box(n, contradiction_edge).map_err(value_err)?,
        })
    }

    /// The optimal quantum strategy's box.
    #[staticmethod]
    fn quantum(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: boxes::quantum_box(n).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text)
                .map_err(|e| PyValueError::new_err(format!("invalid box JSON: {e}")))?,
        })
    }

    #[staticmethod]
    fn mix(boxes_in: Vec<PyChainBox>, weights: Vec<f64>) -> PyResult<Self> {
        let inner: Vec<boxes::ChainBox> = boxes_in.into_iter().map(|b| b.inner).collect();
        Ok(Self {
            inner: boxes::mix(&inner, &weights).map_err(value_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn true_bell_value(&self) -> f64 {
        boxes::true_bell_value(&self.inner)
    }

    fn randomness_distance(&self) -> f64 {
        boxes::randomness_distance(&self.inner)
    }

    fn check_no_signaling(&self) -> bool {
        boxes::check_no_signaling(&self.inner).ok
    }

    /// Mixture weights over the ideal/bad family: (lambda, per-edge mass).
    fn lambda_decompose(&self) -> PyResult<(f64, Vec<f64>)> {
        let d = boxes::lambda_decompose(&self.inner).map_err(value_err)?;
        Ok((d.lambda, d.bad_weights))
    }

    fn edge(&self, edge: usize) -> PyResult<[f64; 4]> {
        if edge < 1 || edge > self.inner.n() {
            return Err(PyValueError::new_err("edge out of range"));
        }
        Ok(*self.inner.edge(edge))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner)
            .map_err(|e| PyValueError::new_err(format!("serialization failed: {e}")))
    }

    fn __repr__(&self) -> String {
        format!("ChainBox(n={})", self.inner.n())
    }
}

#[pyfunction]
fn observed_bell_value(boxes_by_source: Vec<PyChainBox>, source_dist: Vec<f64>) -> PyResult<f64> {
    let inner: Vec<boxes::ChainBox> = boxes_by_source.into_iter().map(|b| b.inner).collect();
    boxes::observed_bell_value(&inner, &source_dist).map_err(value_err)
}

#[pyfunction]
fn toy_example(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    let scenario = boxes::ToyScenario::canonical();
    let mut witnesses = Vec::new();
    for edge in 1..=4usize {
        let consistent = scenario.outcome(edge, edge);
        let wrong = (consistent.0, consistent.1 ^ 1);
        let posterior = boxes::toy_attack(&scenario, edge, wrong).map_err(value_err)?;
        witnesses.push(serde_json::json!({
            "tester_edge": edge,
            "posterior_after_inconsistent": posterior.posterior,
            "excludes_matched_source": posterior.excludes_matched_source,
        }));
    }
    let summary = serde_json::json!({
        "assignments": scenario.assignments,
        "mixture_true_bell_value": boxes::true_bell_value(&scenario.mixture()),
        "witnesses": witnesses,
    });
    json_to_py(py, &summary)
}

fn attack_params(epsilon: f64, r_bits: u32, m: Option<usize>) -> PyResult<attack_lp::AttackParams> {
    match m {
        Some(m) => attack_lp::AttackParams::from_source(sv(epsilon)?, r_bits, m),
        None => attack_lp::derive_attack_params(sv(epsilon)?, r_bits, 1.99),
    }
    .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (epsilon, r_bits, m = None))]
fn derive_attack_params<'py>(
    py: Python<'py>,
    epsilon: f64,
    r_bits: u32,
    m: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &attack_params(epsilon, r_bits, m)?)
}

#[pyfunction]
#[pyo3(signature = (epsilon, r_bits, m = None))]
fn closed_form_optimum<'py>(
    py: Python<'py>,
    epsilon: f64,
    r_bits: u32,
    m: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &attack_lp::closed_form_optimum(&attack_params(epsilon, r_bits, m)?),
    )
}

#[pyfunction]
#[pyo3(signature = (epsilon, r_bits, m))]
fn solve_lp<'py>(
    py: Python<'py>,
    epsilon: f64,
    r_bits: u32,
    m: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let params = attack_params(epsilon, r_bits, Some(m))?;
    let lp = attack_lp::lp_constraints(&params);
    let solution = attack_lp::simplex_solve(&lp).map_err(value_err)?;
    to_py(py, &solution)
}

#[pyfunction]
#[pyo3(signature = (epsilon, r_bits, m = None))]
fn dual_certificate<'py>(
    py: Python<'py>,
    epsilon: f64,
    r_bits: u32,
    m: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let cert =
        attack_lp::dual_certificate(&attack_params(epsilon, r_bits, m)?).map_err(value_err)?;
    to_py(py, &cert)
}

#[pyfunction]
fn cloud_verify<'py>(
    py: Python<'py>,
    epsilon: f64,
    m: usize,
    n: usize,
) -> PyResult<Bound<'py, PyAny>> {
    if n < 2 || !n.is_power_of_two() {
        return Err(PyValueError::new_err("n must be 2 or 4"));
    }
    let params = attack_lp::AttackParams::from_source(sv(epsilon)?, n.trailing_zeros() - 1, m)
        .map_err(value_err)?;
    let ensemble = attack_lp::AttackEnsemble::uniform_sequences(m, n).map_err(value_err)?;
    let report = attack_lp::brute_force_cloud_oracle(&params, &ensemble).map_err(value_err)?;
    to_py(py, &report)
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (
    n,
    trials,
    runs = None,
    epsilon = 0.0,
    supplier = "honest_ideal",
    attack_type = None,
    attack_m = None,
    deterministic_bad = false,
    seed = 0,
))]
fn estimate_acceptance<'py>(
    py: Python<'py>,
    n: usize,
    trials: u64,
    runs: Option<usize>,
    epsilon: f64,
    supplier: &str,
    attack_type: Option<usize>,
    attack_m: Option<usize>,
    deterministic_bad: bool,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let config = build_config(
        n,
        runs,
        epsilon,
        supplier,
        attack_type,
        attack_m,
        deterministic_bad,
        seed,
    )?;
    let estimate = sim::estimate_acceptance(&config, trials).map_err(value_err)?;
    to_py(py, &estimate)
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (
    n,
    trials,
    runs = None,
    epsilon = 0.0,
    supplier = "honest_ideal",
    attack_type = None,
    attack_m = None,
    deterministic_bad = false,
    seed = 0,
))]
fn estimate_output_bias<'py>(
    py: Python<'py>,
    n: usize,
    trials: u64,
    runs: Option<usize>,
    epsilon: f64,
    supplier: &str,
    attack_type: Option<usize>,
    attack_m: Option<usize>,
    deterministic_bad: bool,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let config = build_config(
        n,
        runs,
        epsilon,
        supplier,
        attack_type,
        attack_m,
        deterministic_bad,
        seed,
    )?;
    let estimate = sim::estimate_output_bias(&config, trials).map_err(value_err)?;
    to_py(py, &estimate)
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    n: usize,
    runs: Option<usize>,
    epsilon: f64,
    supplier: &str,
    attack_type: Option<usize>,
    attack_m: Option<usize>,
    deterministic_bad: bool,
    seed: u64,
) -> PyResult<sim::ProtocolConfig> {
    let supplier = match supplier {
        "honest_ideal" => sim::BoxSupplier::HonestIdeal,
        "honest_quantum" => sim::BoxSupplier::HonestQuantum,
        "toy" => sim::BoxSupplier::Toy,
        "attack" => {
            let m = attack_m.unwrap_or_else(|| ((n as f64 / 2.0).powf(1.99)).round() as usize);
            let ensemble = match attack_type {
                Some(j) => attack_lp::AttackEnsemble::single_type(m, n, j),
                None => attack_lp::AttackEnsemble::uniform_sequences(m, n),
            }
            .map_err(value_err)?;
            sim::BoxSupplier::Attack(sim::AttackConfig {
                ensemble,
                bad_box_mode: if deterministic_bad {
                    sim::BadBoxMode::DeterministicZeros
                } else {
                    sim::BadBoxMode::UniformMarginal
                },
            })
        }
        other => return Err(PyValueError::new_err(format!("unknown supplier '{other}'"))),
    };
    let config = sim::ProtocolConfig {
        n,
        runs: runs.unwrap_or_else(|| sim::ProtocolConfig::default_runs(n)),
        epsilon,
        source_strategy: sv_source::BiasStrategy::Uniform,
        supplier,
        seed,
    };
    config.validate().map_err(value_err)?;
    Ok(config)
}

#[pymodule]
fn randamp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChainBox>()?;
    m.add_function(wrap_pyfunction!(threshold_epsilon1, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_ky_fan, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_epsilon2, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_constant, m)?)?;
    m.add_function(wrap_pyfunction!(delta_q, m)?)?;
    m.add_function(wrap_pyfunction!(setting_prob_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(ky_fan_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(bound_chain, m)?)?;
    m.add_function(wrap_pyfunction!(sample_sv_bits, m)?)?;
    m.add_function(wrap_pyfunction!(observed_bell_value, m)?)?;
    m.add_function(wrap_pyfunction!(toy_example, m)?)?;
    m.add_function(wrap_pyfunction!(derive_attack_params, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(solve_lp, m)?)?;
    m.add_function(wrap_pyfunction!(dual_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(cloud_verify, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_acceptance, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_output_bias, m)?)?;
    Ok(())
}
