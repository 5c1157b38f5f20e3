//! Python bindings: scripts, knowledge-base queries, sampling, simulation, metrics and experiments.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use scenforge::dsl::{ComponentKind, SceneScript};
use scenforge::harness::{evaluate_policies, run_finetune_eval, run_generation, RunConfig};
use scenforge::kb::{seed_kb, FrozenKb, HashingEncoder, KnowledgeBase};
use scenforge::metrics::{self, MetricWeights};
use scenforge::policy::PolicyParams;
use scenforge::sampler::{ParamAssignment, SampleState};
use scenforge::sim::{self, SceneTrace};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn assignment(values: BTreeMap<String, f64>) -> ParamAssignment {
    let mut a = ParamAssignment::default();
    for (k, v) in values {
        a.insert(k, v);
    }
    a
}

fn to_map(a: &ParamAssignment) -> BTreeMap<String, f64> {
    a.iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// A parsed scene script.
#[pyclass(name = "SceneScript", module = "scenforge", frozen)]
struct PyScript {
    inner: SceneScript,
}

#[pymethods]
impl PyScript {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        SceneScript::from_text(text)
            .map(|inner| PyScript { inner })
            .map_err(err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    /// Declared parameters as `(name, lo, hi)`.
    fn params(&self) -> Vec<(String, f64, f64)> {
        self.inner.params.iter().map(|p| (p.name.clone(), p.lo, p.hi)).collect()
    }

    fn __repr__(&self) -> String {
        format!("SceneScript(params={})", self.inner.params.len())
    }
}

/// A frozen snippet knowledge base.
#[pyclass(name = "KnowledgeBase", module = "scenforge", frozen)]
struct PyKb {
    inner: FrozenKb,
}

#[pymethods]
impl PyKb {
    /// The bundled seed knowledge base.
    #[staticmethod]
    fn seed() -> PyResult<Self> {
        seed_kb().freeze().map(|inner| PyKb { inner }).map_err(err)
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        KnowledgeBase::load_dir(&dir, Arc::new(HashingEncoder::default()))
            .and_then(|kb| kb.freeze())
            .map(|inner| PyKb { inner })
            .map_err(err)
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.kb().save_dir(&dir).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.kb().len()
    }

    /// Top-`k` entries of one kind as `(id, score, description, snippet)`.
    #[pyo3(signature = (kind, text, k = 3))]
    fn query(&self, kind: &str, text: &str, k: usize) -> PyResult<Vec<(u32, f64, String, String)>> {
        let kind = ComponentKind::parse(kind).ok_or_else(|| PyValueError::new_err(format!("unknown kind {kind:?}")))?;
        let hits = self.inner.query(kind, text, k).map_err(err)?;
        Ok(hits
            .into_iter()
            .map(|h| {
                let e = self.inner.entry(h.entry).expect("hit refers to an entry");
                (h.entry.0, h.score, e.description.clone(), e.snippet_text.clone())
            })
            .collect())
    }
}

/// Adaptive parameter sampler for one script.
#[pyclass(name = "SampleState", module = "scenforge")]
struct PySampleState {
    inner: SampleState,
}

#[pymethods]
impl PySampleState {
    #[new]
    fn new(script: &PyScript, seed: u64) -> PyResult<Self> {
        SampleState::new(&script.inner.params, seed)
            .map(|inner| PySampleState { inner })
            .map_err(err)
    }

    fn sample(&mut self) -> BTreeMap<String, f64> {
        to_map(&self.inner.sample())
    }

    fn record_outcome(&mut self, values: BTreeMap<String, f64>, collided: bool) -> PyResult<()> {
        self.inner.record_outcome(&assignment(values), collided).map_err(err)
    }

    fn refine(&mut self) {
        self.inner.refine()
    }

    /// Current sampling range per parameter.
    fn ranges(&self) -> BTreeMap<String, (f64, f64)> {
        self.inner.params.iter().map(|p| (p.name.clone(), p.current)).collect()
    }

    #[getter]
    fn samples_drawn(&self) -> u64 {
        self.inner.samples_drawn
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        SampleState::from_json(text)
            .map(|inner| PySampleState { inner })
            .map_err(err)
    }
}

/// Ego driving-policy parameters.
#[pyclass(name = "PolicyParams", module = "scenforge", frozen, from_py_object)]
#[derive(Clone)]
struct PyPolicy {
    inner: PolicyParams,
}

#[pymethods]
impl PyPolicy {
    /// Defaults for every omitted field.
    #[new]
    #[pyo3(signature = (**fields))]
    fn new(fields: Option<BTreeMap<String, f64>>) -> PyResult<Self> {
        let mut p = PolicyParams::default();
        for (k, v) in fields.unwrap_or_default() {
            let slot = match k.as_str() {
                "target_speed" => &mut p.target_speed,
                "brake_trigger_distance" => &mut p.brake_trigger_distance,
                "brake_decel" => &mut p.brake_decel,
                "steering_gain" => &mut p.steering_gain,
                "detection_range" => &mut p.detection_range,
                "detection_half_angle" => &mut p.detection_half_angle,
                _ => return Err(PyKeyError::new_err(k)),
            };
            *slot = v;
        }
        p.validate().map_err(err)?;
        Ok(PyPolicy { inner: p })
    }

    fn to_dict(&self) -> BTreeMap<&'static str, f64> {
        let p = &self.inner;
        BTreeMap::from([
            ("target_speed", p.target_speed),
            ("brake_trigger_distance", p.brake_trigger_distance),
            ("brake_decel", p.brake_decel),
            ("steering_gain", p.steering_gain),
            ("detection_range", p.detection_range),
            ("detection_half_angle", p.detection_half_angle),
        ])
    }

    fn __repr__(&self) -> String {
        format!("PolicyParams({:?})", self.inner)
    }
}

/// A recorded simulation.
#[pyclass(name = "SceneTrace", module = "scenforge", frozen)]
struct PyTrace {
    inner: SceneTrace,
}

#[pymethods]
impl PyTrace {
    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        SceneTrace::from_jsonl(text).map(|inner| PyTrace { inner }).map_err(err)
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    #[getter]
    fn collided(&self) -> bool {
        self.inner.collided()
    }

    fn __len__(&self) -> usize {
        self.inner.frames.len()
    }

    fn adversary_path(&self) -> Vec<(f64, f64)> {
        self.inner.adversary_path()
    }

    /// Scene metrics under default weights as a dict.
    fn metrics(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let m = metrics::compute_scene_metrics(&self.inner, &MetricWeights::default()).map_err(err)?;
        json_to_py(py, &serde_json::to_string(&m).expect("metrics serialize"))
    }
}

/// Simulate one scene of `script` on route `route` with `policy` driving the ego.
#[pyfunction]
#[pyo3(signature = (script, values, route = 0, policy = None, seed = 0))]
fn simulate(
    py: Python<'_>,
    script: &PyScript,
    values: BTreeMap<String, f64>,
    route: usize,
    policy: Option<PyPolicy>,
    seed: u64,
) -> PyResult<PyTrace> {
    let config = sim::build_scene(&script.inner, &assignment(values), route).map_err(err)?;
    let params = policy.map(|p| p.inner).unwrap_or_default();
    let inner = py.detach(|| sim::run(&config, &params, seed));
    Ok(PyTrace { inner })
}

/// Re-run a trace; returns `(identical, frames)`.
#[pyfunction]
fn replay(text: &str) -> PyResult<(bool, usize)> {
    sim::replay(text).map(|r| (r.identical, r.frames)).map_err(err)
}

/// Average pairwise displacement between trajectories.
#[pyfunction]
fn ade(trajectories: Vec<Vec<(f64, f64)>>) -> PyResult<f64> {
    metrics::ade(&trajectories).map_err(err)
}

fn config_from(text: &str, out: Option<PathBuf>) -> PyResult<RunConfig> {
    let mut c = RunConfig::from_toml(text).map_err(err)?;
    if let Some(out) = out {
        c.out = out;
    }
    c.validate().map_err(err)?;
    Ok(c)
}

/// Run generation for a TOML config; returns a summary dict.
#[pyfunction]
#[pyo3(signature = (config_toml, out = None))]
fn generate(py: Python<'_>, config_toml: &str, out: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let config = config_from(config_toml, out)?;
    let s = py.detach(|| run_generation(&config)).map_err(err)?;
    let summary = serde_json::json!({
        "out": s.out,
        "cells": s.cells,
        "selected": s.selected,
        "report": s.report,
    });
    json_to_py(py, &summary.to_string())
}

/// Evaluate the surrogate and configured policies; returns the report dict.
#[pyfunction]
#[pyo3(signature = (config_toml, out = None))]
fn evaluate(py: Python<'_>, config_toml: &str, out: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let config = config_from(config_toml, out)?;
    let r = py.detach(|| evaluate_policies(&config)).map_err(err)?;
    json_to_py(py, &r.to_json())
}

/// Finetune on training routes and evaluate on held-out routes; returns the report dict.
#[pyfunction]
#[pyo3(signature = (config_toml, out = None))]
fn finetune(py: Python<'_>, config_toml: &str, out: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let config = config_from(config_toml, out)?;
    let r = py.detach(|| run_finetune_eval(&config)).map_err(err)?;
    json_to_py(py, &serde_json::to_string(&r).expect("report serializes"))
}

#[pymodule]
fn _scenforge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScript>()?;
    m.add_class::<PyKb>()?;
    m.add_class::<PySampleState>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(ade, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(finetune, m)?)?;
    Ok(())
}
