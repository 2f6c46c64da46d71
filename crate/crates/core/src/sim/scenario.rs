//! Scenario definitions and the scenario file format.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::index::sample;
use thiserror::Error;

use crate::config::{default_config, ConfigError, SystemConfig};
use crate::corpus::{self, CorpusError, CorpusSpec};
use crate::embedding::SyntheticParams;
use crate::inference::{InferenceBackend, InferenceError, OracleBackend, OracleParams, Relevance, Role, TraceBackend};
use crate::kv::{self, KvError};
use crate::link::{self, ContactWindow, LinkError};
use crate::rng;
use crate::sim::workload::{ByteSize, WorkloadSpec};
use crate::types::{ArchiveRecord, ImageId};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("scenario key {key}: {reason}")]
    Value { key: String, reason: String },
    #[error("unknown scenario key {0:?}")]
    UnknownKey(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum WindowSpec {
    Periodic { period: f64, contact: f64 },
    Explicit(Vec<ContactWindow>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialArchive {
    /// A seeded random sample of corpus images.
    Random(usize),
    Ids(Vec<ImageId>),
}

#[derive(Clone, Debug)]
pub enum BackendSpec {
    Oracle(OracleParams),
    Trace(TraceBackend),
}

impl BackendSpec {
    pub fn oracle(&self) -> Option<&OracleParams> {
        match self {
            BackendSpec::Oracle(p) => Some(p),
            BackendSpec::Trace(_) => None,
        }
    }

    pub fn oracle_mut(&mut self) -> Option<&mut OracleParams> {
        match self {
            BackendSpec::Oracle(p) => Some(p),
            BackendSpec::Trace(_) => None,
        }
    }

    /// Instantiates the backend. Oracle backends answer from `answers` when
    /// they are wrong.
    pub fn build(&self, role: Role, seed: u64, answers: &[String]) -> Arc<dyn InferenceBackend> {
        match self {
            BackendSpec::Oracle(p) => {
                let mut params = p.clone();
                if params.answer_space.is_empty() {
                    params.answer_space = answers.to_vec();
                }
                Arc::new(OracleBackend::new(params, role, seed))
            }
            BackendSpec::Trace(t) => Arc::new(t.clone()),
        }
    }
}

/// Fixed service times, in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub onboard_inference: f64,
    pub ground_inference: f64,
    pub ground_retrieval: f64,
    pub propagation_delay: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            onboard_inference: 1.5,
            ground_inference: 0.3,
            ground_retrieval: 0.0,
            propagation_delay: 0.0,
        }
    }
}

/// Everything a run needs.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: SystemConfig,
    /// Captures happen at `t < horizon`.
    pub horizon: f64,
    /// Extra time after the horizon for in-flight work to finish.
    pub drain: f64,
    pub windows: WindowSpec,
    pub corpus: Vec<ArchiveRecord>,
    pub initial_satellite: InitialArchive,
    pub workload: WorkloadSpec,
    pub embedding: SyntheticParams,
    pub satellite_backend: BackendSpec,
    pub ground_backend: BackendSpec,
    pub timing: Timing,
    pub priority_enabled: bool,
}

impl Scenario {
    /// The reference scenario: a scaled 95 s orbit with 5 s of contact,
    /// 24 scene labels in 6 families and mission phases of three labels.
    pub fn canonical() -> Self {
        let corpus_spec = CorpusSpec::default();
        let corpus = corpus::synthetic_corpus(&corpus_spec);
        let vocab = corpus::instruction_vocabulary();
        let instructions = [0, 1, 4, 9, 12, 16].iter().map(|&i| vocab[i].clone()).collect();
        let mut labels = corpus_spec.labels();
        labels.sort();
        Self {
            config: default_config(),
            horizon: 3600.0,
            drain: 600.0,
            windows: WindowSpec::Periodic {
                period: 95.0,
                contact: 5.0,
            },
            corpus,
            initial_satellite: InitialArchive::Random(20),
            workload: WorkloadSpec {
                labels,
                labels_per_phase: 3,
                phase_duration: 600.0,
                instructions,
                image_bytes: ByteSize::Uniform(80_000, 160_000),
            },
            embedding: SyntheticParams::default(),
            satellite_backend: BackendSpec::Oracle(OracleParams::satellite()),
            ground_backend: BackendSpec::Oracle(OracleParams::ground()),
            timing: Timing::default(),
            priority_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.config.validate_relaxed()?;
        let value = |key: &str, reason: String| ScenarioError::Value {
            key: key.to_string(),
            reason,
        };
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(value("horizon", "must be a non-negative number".into()));
        }
        if !(self.drain >= 0.0 && self.drain.is_finite()) {
            return Err(value("drain", "must be a non-negative number".into()));
        }
        self.workload.validate().map_err(|r| value("workload", r))?;
        for b in [&self.satellite_backend, &self.ground_backend] {
            if let Some(p) = b.oracle() {
                p.validate().map_err(|r| value("backend", r))?;
            }
        }
        for (key, v) in [
            ("onboard_inference_s", self.timing.onboard_inference),
            ("ground_inference_s", self.timing.ground_inference),
            ("ground_retrieval_s", self.timing.ground_retrieval),
            ("propagation_delay_s", self.timing.propagation_delay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(value(key, format!("{v} must be a non-negative number")));
            }
        }
        if self.corpus.is_empty() {
            return Err(value("corpus", "corpus is empty".into()));
        }
        if self.corpus.len() < self.config.k {
            return Err(value(
                "corpus",
                format!("{} images cannot fill K = {} ground results", self.corpus.len(), self.config.k),
            ));
        }
        if let WindowSpec::Explicit(w) = &self.windows {
            link::validate_windows(w)?;
        }
        Ok(())
    }

    /// Contact windows that open before the end of the drain period.
    pub fn contact_windows(&self) -> Result<Vec<ContactWindow>, ScenarioError> {
        let end = self.horizon + self.drain;
        Ok(match &self.windows {
            WindowSpec::Periodic { period, contact } => link::generate_windows(*period, *contact, end)?,
            WindowSpec::Explicit(w) => w.iter().copied().filter(|w| w.open < end).collect(),
        })
    }

    /// Corpus records the satellite starts with, in insertion order.
    pub fn initial_satellite_records(&self) -> Vec<ArchiveRecord> {
        match &self.initial_satellite {
            InitialArchive::Random(n) => {
                let n = (*n).min(self.corpus.len()).min(self.config.sat_archive_cap);
                let mut r = rng::stream(self.config.rng_seed, "initial-archive", &[]);
                let mut picks = sample(&mut r, self.corpus.len(), n).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(|i| self.corpus[i].clone()).collect()
            }
            InitialArchive::Ids(ids) => {
                let wanted: BTreeSet<ImageId> = ids.iter().copied().collect();
                self.corpus.iter().filter(|r| wanted.contains(&r.id())).cloned().collect()
            }
        }
    }

    /// Distinct answers in the corpus, sorted.
    pub fn answer_space(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .corpus
            .iter()
            .flat_map(|r| r.pairs.iter().map(|(_, a)| a.as_str()))
            .collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Reads a scenario file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = read(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, &base)
    }

    pub fn from_text(text: &str, base: &Path) -> Result<Self, ScenarioError> {
        let entries = kv::parse(text)?;
        let mut s = Self::canonical();
        let resolve = |v: &str| -> PathBuf { base.join(v) };
        let mut corpus_spec = CorpusSpec::default();
        let mut corpus_file: Option<PathBuf> = None;
        let mut schedule: Option<PathBuf> = None;
        let mut period: Option<f64> = None;
        let mut contact: Option<f64> = None;
        let mut workload_labels: Option<Vec<String>> = None;

        if let Some(e) = entries.iter().find(|e| e.key == "config") {
            s.config = SystemConfig::load(&resolve(&e.value))?;
        }
        for e in &entries {
            let key = e.key.as_str();
            let v = e.value.as_str();
            let bad = |reason: &str| ScenarioError::Value {
                key: key.to_string(),
                reason: format!("line {}: {reason} (got {v:?})", e.line),
            };
            let num = || v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad("expected a number"));
            // `x` or `lo..hi`.
            let range = || {
                let parse = |t: &str| t.trim().parse::<f64>().ok().filter(|x| x.is_finite() && *x >= 0.0);
                let r = match v.split_once("..") {
                    Some((lo, hi)) => parse(lo).zip(parse(hi)).filter(|(lo, hi)| lo <= hi),
                    None => parse(v).map(|x| (x, x)),
                };
                r.ok_or_else(|| bad("expected x or lo..hi"))
            };
            let int = || v.parse::<u64>().map_err(|_| bad("expected a non-negative integer"));
            let flag = || match v {
                "on" | "true" | "1" => Ok(true),
                "off" | "false" | "0" => Ok(false),
                _ => Err(bad("expected on or off")),
            };
            if let Some(field) = key.strip_prefix("config.") {
                s.config.set(field, v)?;
                continue;
            }
            if let Some(field) = key.strip_prefix("satellite.") {
                set_backend(&mut s.satellite_backend, field, v, base).map_err(|r| bad(&r))?;
                continue;
            }
            if let Some(field) = key.strip_prefix("ground.") {
                set_backend(&mut s.ground_backend, field, v, base).map_err(|r| bad(&r))?;
                continue;
            }
            match key {
                "config" => {}
                "corpus" => corpus_file = Some(resolve(v)),
                "corpus.images_per_label" => corpus_spec.images_per_label = int()? as usize,
                "corpus.pairs_per_image" => corpus_spec.pairs_per_image = int()? as usize,
                "corpus.record_bytes" => corpus_spec.record_bytes = int()?,
                "corpus.seed" => corpus_spec.seed = int()?,
                "corpus.families" => corpus_spec.families = list(v, ','),
                "corpus.variants" => corpus_spec.variants = list(v, ','),
                "schedule" => schedule = Some(resolve(v)),
                "orbit_period" => period = Some(num()?),
                "contact_duration" => contact = Some(num()?),
                "horizon" => s.horizon = num()?,
                "drain" => s.drain = num()?,
                "initial_satellite_images" => s.initial_satellite = InitialArchive::Random(int()? as usize),
                "initial_satellite_ids" => {
                    let ids = list(v, ',')
                        .iter()
                        .map(|x| x.parse::<u64>().map(ImageId))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| bad("expected comma-separated image ids"))?;
                    s.initial_satellite = InitialArchive::Ids(ids);
                }
                "priority" => s.priority_enabled = flag()?,
                "onboard_inference_s" => s.timing.onboard_inference = num()?,
                "ground_inference_s" => s.timing.ground_inference = num()?,
                "ground_retrieval_s" => s.timing.ground_retrieval = num()?,
                "propagation_delay_s" => s.timing.propagation_delay = num()?,
                "workload.labels" => workload_labels = Some(list(v, ',')),
                "workload.labels_per_phase" => s.workload.labels_per_phase = int()? as usize,
                "workload.phase_duration" => s.workload.phase_duration = num()?,
                "workload.instructions" => s.workload.instructions = list(v, '|'),
                "workload.image_bytes" => {
                    s.workload.image_bytes = ByteSize::parse(v).ok_or_else(|| bad("expected N or LO..HI"))?
                }
                "embedding.dim" => s.embedding.dim = int()? as usize,
                "embedding.image_noise" => s.embedding.image_noise = num()?,
                "embedding.text_noise" => s.embedding.text_noise = range()?,
                "embedding.seed" => s.embedding.seed = int()?,
                other => return Err(ScenarioError::UnknownKey(other.to_string())),
            }
        }

        s.corpus = match corpus_file {
            Some(p) => corpus::load_corpus(&p)?,
            None => corpus::synthetic_corpus(&corpus_spec),
        };
        s.workload.labels = match workload_labels {
            Some(l) => l,
            None => {
                let set: BTreeSet<&str> = s.corpus.iter().map(|r| r.image.scene_label.as_str()).collect();
                set.into_iter().map(str::to_string).collect()
            }
        };
        s.windows = match (schedule, period, contact) {
            (Some(p), None, None) => WindowSpec::Explicit(link::load_windows(&p)?),
            (Some(_), _, _) => {
                return Err(ScenarioError::Value {
                    key: "schedule".into(),
                    reason: "give either a schedule file or orbit_period/contact_duration".into(),
                })
            }
            (None, p, c) => WindowSpec::Periodic {
                period: p.unwrap_or(95.0),
                contact: c.unwrap_or(5.0),
            },
        };
        s.validate()?;
        Ok(s)
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|err| ScenarioError::Io {
        path: path.display().to_string(),
        reason: err.to_string(),
    })
}

fn list(v: &str, sep: char) -> Vec<String> {
    v.split(sep).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn set_backend(spec: &mut BackendSpec, field: &str, v: &str, base: &Path) -> Result<(), String> {
    if field == "trace" {
        let t = TraceBackend::load(&base.join(v)).map_err(|e| e.to_string())?;
        *spec = BackendSpec::Trace(t);
        return Ok(());
    }
    let Some(p) = spec.oracle_mut() else {
        return Err("oracle parameters cannot be combined with a trace backend".into());
    };
    let num = || v.parse::<f64>().map_err(|_| "expected a number".to_string());
    match field {
        "base_accuracy" => p.base_accuracy = num()?,
        "context_gain" => p.context_gain = num()?,
        "max_accuracy" => p.max_accuracy = num()?,
        "correct_conf_mean" => p.correct_conf_mean = num()?,
        "incorrect_conf_mean" => p.incorrect_conf_mean = num()?,
        "conf_spread" => p.conf_spread = num()?,
        "tokens_per_answer" => p.tokens_per_answer = v.parse().map_err(|_| "expected an integer".to_string())?,
        "relevance" => {
            p.relevance = match v {
                "label" => Relevance::Label,
                "label_and_instruction" => Relevance::LabelAndInstruction,
                _ => return Err("expected label or label_and_instruction".into()),
            }
        }
        other => return Err(format!("unknown backend parameter {other:?}")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_is_valid() {
        let s = Scenario::canonical();
        s.validate().unwrap();
        assert_eq!(s.corpus.len(), 600);
        assert_eq!(s.initial_satellite_records().len(), 20);
        let w = s.contact_windows().unwrap();
        assert_eq!(w[1].open, 95.0);
        assert_eq!(w[1].close, 100.0);
    }

    #[test]
    fn empty_text_is_canonical_shape() {
        let s = Scenario::from_text("", Path::new(".")).unwrap();
        let c = Scenario::canonical();
        assert_eq!(s.config, c.config);
        assert_eq!(s.corpus, c.corpus);
        assert_eq!(s.workload, c.workload);
        assert_eq!(s.windows, c.windows);
    }

    #[test]
    fn overrides_apply() {
        let text = "horizon = 10\nconfig.T_K = 6\npriority = off\nsatellite.base_accuracy = 0.3\norbit_period = 50\n";
        let s = Scenario::from_text(text, Path::new(".")).unwrap();
        assert_eq!(s.horizon, 10.0);
        assert_eq!(s.config.t_k, 6);
        assert!(!s.priority_enabled);
        assert_eq!(s.satellite_backend.oracle().unwrap().base_accuracy, 0.3);
        assert_eq!(s.windows, WindowSpec::Periodic { period: 50.0, contact: 5.0 });
    }

    #[test]
    fn rejects_unknown_and_missing() {
        assert!(matches!(
            Scenario::from_text("bogus = 1", Path::new(".")),
            Err(ScenarioError::UnknownKey(_))
        ));
        let err = Scenario::from_text("corpus = /nonexistent/c.tsv", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/c.tsv"));
    }
}
