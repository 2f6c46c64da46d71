//! Python bindings for the simulator core.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sg::archive::{Archive as CoreArchive, RetrievedRecord};
use sg::config::SystemConfig;
use sg::embedding::{normalize as core_normalize, EmbeddingProvider, SyntheticEmbedder, SyntheticParams};
use sg::link;
use sg::satellite::{matching_test as core_matching_test, MatchOutcome};
use sg::sim::backlog::{backlog_experiment, latency_slope, BacklogParams};
use sg::sim::scenario::Scenario;
use sg::sim::workload::ByteSize;
use sg::types::{ArchiveRecord, ImagePayload, Query};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// System hyperparameters.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SystemConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: sg::default_config(),
        }
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        SystemConfig::from_text(text).map(|inner| Self { inner }).map_err(value_err)
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(value_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }
    #[getter]
    fn t_m(&self) -> f64 {
        self.inner.t_m
    }
    #[getter]
    fn t_i(&self) -> f64 {
        self.inner.t_i
    }
    #[getter]
    fn t_k(&self) -> usize {
        self.inner.t_k
    }
    #[getter]
    fn t_conf(&self) -> f64 {
        self.inner.t_conf
    }
    #[getter]
    fn n_mp(&self) -> usize {
        self.inner.n_mp
    }
    #[getter]
    fn sat_archive_cap(&self) -> usize {
        self.inner.sat_archive_cap
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(k={}, t_m={}, t_i={}, t_k={}, t_conf={})",
            self.inner.k, self.inner.t_m, self.inner.t_i, self.inner.t_k, self.inner.t_conf
        )
    }
}

/// Geometric mean of token probabilities.
#[pyfunction]
fn confidence(probs: Vec<f64>) -> PyResult<f64> {
    sg::inference::confidence_of(&probs).map_err(value_err)
}

/// Scales a vector to unit length.
#[pyfunction]
fn normalize(v: Vec<f64>) -> PyResult<Vec<f64>> {
    core_normalize(v).map(|e| e.into_inner()).map_err(value_err)
}

/// Synthetic embedding provider.
#[pyclass(name = "Embedder", from_py_object)]
#[derive(Clone)]
struct PyEmbedder {
    inner: Arc<SyntheticEmbedder>,
}

#[pymethods]
impl PyEmbedder {
    #[new]
    #[pyo3(signature = (dim = 64, seed = 0))]
    fn new(dim: usize, seed: u64) -> Self {
        Self {
            inner: Arc::new(SyntheticEmbedder::new(SyntheticParams {
                dim,
                seed,
                ..SyntheticParams::default()
            })),
        }
    }

    fn embed_image(&self, image_id: u64, feature_seed: u64, label: &str) -> PyResult<Vec<f64>> {
        self.inner
            .embed_image(&ImagePayload::new(image_id, feature_seed, label))
            .map(|e| e.into_inner())
            .map_err(value_err)
    }

    fn embed_text(&self, text: &str) -> PyResult<Vec<f64>> {
        self.inner.embed_text(text).map(|e| e.into_inner()).map_err(value_err)
    }
}

fn record_dict<'py>(py: Python<'py>, r: &RetrievedRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("image_id", r.image.image_id.0)?;
    d.set_item("label", &r.image.scene_label)?;
    d.set_item("instruction", &r.instruction)?;
    d.set_item("ground_truth", &r.ground_truth)?;
    d.set_item("image_similarity", r.image_similarity)?;
    d.set_item("instruction_similarity", r.instruction_similarity)?;
    d.set_item("fused_score", r.fused_score)?;
    Ok(d)
}

/// Multimodal retrieval archive, optionally capped with LRU eviction.
#[pyclass(name = "Archive")]
struct PyArchive {
    inner: CoreArchive,
    last: Vec<RetrievedRecord>,
}

#[pymethods]
impl PyArchive {
    #[new]
    #[pyo3(signature = (embedder, cap = None))]
    fn new(embedder: PyEmbedder, cap: Option<usize>) -> Self {
        let provider: Arc<dyn EmbeddingProvider> = embedder.inner;
        let inner = match cap {
            Some(c) => CoreArchive::with_lru(provider, c),
            None => CoreArchive::new(provider),
        };
        Self {
            inner,
            last: Vec::new(),
        }
    }

    /// Adds an image with its `(instruction, answer)` pairs.
    #[pyo3(signature = (image_id, feature_seed, label, pairs, record_bytes = 100000))]
    fn insert(
        &mut self,
        image_id: u64,
        feature_seed: u64,
        label: &str,
        pairs: Vec<(String, String)>,
        record_bytes: u64,
    ) -> PyResult<()> {
        let record = ArchiveRecord::new(ImagePayload::new(image_id, feature_seed, label), pairs, record_bytes)
            .map_err(value_err)?;
        self.inner.insert(&record).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn image_ids(&self) -> Vec<u64> {
        self.inner.image_ids().iter().map(|i| i.0).collect()
    }

    /// Top-k fused hits for a query image and instruction, as dicts.
    fn retrieve<'py>(
        &mut self,
        py: Python<'py>,
        feature_seed: u64,
        label: &str,
        instruction: &str,
        k: usize,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let q = Query::new(0, 0.0, ImagePayload::new(0, feature_seed, label), instruction, 0);
        self.last = self.inner.retrieve(&q, k).map_err(value_err)?;
        self.last.iter().map(|r| record_dict(py, r)).collect()
    }

    /// Matching test over the hits of the last `retrieve` call. Returns
    /// `(passed, survivors)`.
    fn matching_test(&self, config: &PyConfig) -> (bool, usize) {
        match core_matching_test(&self.last, &config.inner) {
            MatchOutcome::Pass(kept) => (true, kept.len()),
            MatchOutcome::Reject { survivors } => (false, survivors),
        }
    }

    /// LRU order, most recent first; empty for uncapped archives.
    fn lru(&self) -> Vec<u64> {
        self.inner
            .lru()
            .map(|l| l.to_vec().into_iter().map(|i| i.0).collect())
            .unwrap_or_default()
    }
}

/// Contact windows `(open, close)` of a periodic orbit.
#[pyfunction]
fn generate_windows(period: f64, contact: f64, horizon: f64) -> PyResult<Vec<(f64, f64)>> {
    link::generate_windows(period, contact, horizon)
        .map(|ws| ws.into_iter().map(|w| (w.open, w.close)).collect())
        .map_err(value_err)
}

#[pyfunction]
fn transfer_time(bytes: u64, rate_bps: f64) -> f64 {
    link::transfer_time(bytes, rate_bps)
}

/// Runs a scenario and returns its summary as a dict.
#[pyfunction]
#[pyo3(signature = (scenario = None, seed = None))]
fn simulate<'py>(py: Python<'py>, scenario: Option<PathBuf>, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let mut s = match scenario {
        Some(path) => Scenario::load(&path).map_err(value_err)?,
        None => Scenario::canonical(),
    };
    if let Some(seed) = seed {
        s.config.rng_seed = seed;
    }
    let out = sg::sim::run(&s).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let m = &out.summary;
    let d = PyDict::new(py);
    d.set_item("captured", m.captured)?;
    d.set_item("answered", m.answered)?;
    d.set_item("unanswered", m.unanswered)?;
    d.set_item("accuracy", m.accuracy)?;
    d.set_item("onboard_accuracy", m.onboard_accuracy)?;
    d.set_item("onboard_fraction", m.onboard_fraction)?;
    d.set_item("mean_latency", m.mean_latency)?;
    d.set_item("median_latency", m.median_latency)?;
    d.set_item("max_latency", m.max_latency)?;
    d.set_item("uplink_bytes", m.uplink_bytes)?;
    d.set_item("downlink_bytes", m.downlink_bytes)?;
    Ok(d)
}

/// Transmit-everything baseline. Returns `(slope, latencies)`.
#[pyfunction]
#[pyo3(signature = (image_bytes = 600000, horizon = 7200.0, period = 60.0, contact = 3.0, rate_bps = 30e6))]
fn backlog(image_bytes: u64, horizon: f64, period: f64, contact: f64, rate_bps: f64) -> PyResult<(f64, Vec<f64>)> {
    let p = BacklogParams {
        image_bytes: ByteSize::Const(image_bytes),
        horizon,
        period,
        contact,
        rate_bps,
        ..BacklogParams::default()
    };
    let pts = backlog_experiment(&p).map_err(PyValueError::new_err)?;
    Ok((latency_slope(&pts), pts.iter().map(|pt| pt.latency).collect()))
}

#[pymodule]
fn satground(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyEmbedder>()?;
    m.add_class::<PyArchive>()?;
    m.add_function(wrap_pyfunction!(confidence, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(generate_windows, m)?)?;
    m.add_function(wrap_pyfunction!(transfer_time, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(backlog, m)?)?;
    Ok(())
}
