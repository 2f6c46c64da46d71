//! Inference backends and the token-confidence score.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::archive::RetrievedRecord;
use crate::rng;
use crate::types::{AnswerText, Query, QueryId};

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("generation produced no tokens")]
    EmptyGeneration,
    #[error("token probability {0} is outside (0, 1]")]
    BadProbability(f64),
    #[error("no recorded trace for query {0}")]
    MissingTrace(QueryId),
    #[error("trace line {line}: {reason}")]
    TraceFormat { line: usize, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceOutput {
    pub answer: AnswerText,
    /// `P(x_i | x_<i)` of each generated token, prompt tokens excluded.
    pub token_probs: Vec<f64>,
    pub n_inp: usize,
    pub n_gen: usize,
}

impl InferenceOutput {
    pub fn new(answer: impl Into<String>, token_probs: Vec<f64>, n_inp: usize) -> Self {
        let n_gen = token_probs.len();
        Self {
            answer: answer.into(),
            token_probs,
            n_inp,
            n_gen,
        }
    }
}

/// Geometric mean of the generated-token probabilities,
/// `exp((1/n) Σ ln p_i)` over exactly the `n_gen` generated tokens.
///
/// The result is clamped to `[min p_i, max p_i]`, which the exact value
/// always satisfies, so rounding cannot push it outside those bounds. A
/// constant sequence returns its value exactly.
pub fn confidence(out: &InferenceOutput) -> Result<f64, InferenceError> {
    confidence_of(&out.token_probs)
}

pub fn confidence_of(probs: &[f64]) -> Result<f64, InferenceError> {
    if probs.is_empty() {
        return Err(InferenceError::EmptyGeneration);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut log_sum = 0.0;
    for &p in probs {
        if !(p > 0.0 && p <= 1.0) {
            return Err(InferenceError::BadProbability(p));
        }
        lo = lo.min(p);
        hi = hi.max(p);
        log_sum += p.ln();
    }
    if lo == hi {
        return Ok(lo);
    }
    Ok((log_sum / probs.len() as f64).exp().clamp(lo, hi))
}

/// A model that answers a query given retrieved context.
pub trait InferenceBackend: Send + Sync {
    fn generate(&self, query: &Query, context: &[RetrievedRecord]) -> Result<InferenceOutput, InferenceError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Satellite,
    Ground,
}

impl Role {
    fn tag(self) -> u64 {
        match self {
            Role::Satellite => 1,
            Role::Ground => 2,
        }
    }
}

/// Which context records count as relevant to a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relevance {
    /// Same scene label.
    Label,
    /// Same scene label and verbatim the same instruction.
    LabelAndInstruction,
}

/// Parameters of the synthetic oracle model.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleParams {
    /// Probability of a correct answer with no relevant context.
    pub base_accuracy: f64,
    /// Added per relevant context record.
    pub context_gain: f64,
    pub max_accuracy: f64,
    /// Per-token probability level of correct answers.
    pub correct_conf_mean: f64,
    /// Per-token probability level of incorrect answers.
    pub incorrect_conf_mean: f64,
    /// Half-width of the uniform per-token noise, in log space.
    pub conf_spread: f64,
    pub tokens_per_answer: usize,
    pub relevance: Relevance,
    /// Candidate answers; wrong answers are drawn from here.
    pub answer_space: Vec<AnswerText>,
}

impl OracleParams {
    pub fn satellite() -> Self {
        Self {
            base_accuracy: 0.56,
            context_gain: 0.12,
            max_accuracy: 0.95,
            correct_conf_mean: 0.9,
            incorrect_conf_mean: 0.6,
            conf_spread: 0.3,
            tokens_per_answer: 4,
            relevance: Relevance::LabelAndInstruction,
            answer_space: Vec::new(),
        }
    }

    pub fn ground() -> Self {
        Self {
            base_accuracy: 0.68,
            context_gain: 0.06,
            max_accuracy: 0.97,
            ..Self::satellite()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("base_accuracy", self.base_accuracy),
            ("context_gain", self.context_gain),
            ("max_accuracy", self.max_accuracy),
            ("correct_conf_mean", self.correct_conf_mean),
            ("incorrect_conf_mean", self.incorrect_conf_mean),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if self.correct_conf_mean <= 0.0 || self.incorrect_conf_mean <= 0.0 {
            return Err("confidence levels must be positive".into());
        }
        if !(self.conf_spread >= 0.0) {
            return Err("conf_spread must be non-negative".into());
        }
        if self.tokens_per_answer == 0 {
            return Err("tokens_per_answer must be at least 1".into());
        }
        Ok(())
    }
}

/// Deterministic stand-in for a vision-language model.
///
/// Correctness is a Bernoulli draw keyed by the query id whose success
/// probability grows with the number of relevant context records. Token
/// probabilities are drawn around a level that depends on correctness, so
/// the confidence score separates right from wrong answers statistically.
#[derive(Clone, Debug)]
pub struct OracleBackend {
    pub params: OracleParams,
    pub role: Role,
    pub seed: u64,
}

impl OracleBackend {
    pub fn new(params: OracleParams, role: Role, seed: u64) -> Self {
        Self { params, role, seed }
    }

    pub fn relevant_count(&self, query: &Query, context: &[RetrievedRecord]) -> usize {
        context
            .iter()
            .filter(|r| r.image.scene_label == query.image.scene_label)
            .filter(|r| match self.params.relevance {
                Relevance::Label => true,
                Relevance::LabelAndInstruction => r.instruction == query.instruction,
            })
            .count()
    }

    pub fn success_probability(&self, query: &Query, context: &[RetrievedRecord]) -> f64 {
        let p = &self.params;
        (p.base_accuracy + p.context_gain * self.relevant_count(query, context) as f64)
            .min(p.max_accuracy)
            .clamp(0.0, 1.0)
    }

    fn wrong_answer(&self, query: &Query) -> AnswerText {
        let options: Vec<&AnswerText> = self
            .params
            .answer_space
            .iter()
            .filter(|a| **a != query.truth)
            .collect();
        if options.is_empty() {
            return format!("not {}", query.truth);
        }
        let pick = rng::derive_seed(self.seed, "oracle-wrong", &[self.role.tag(), query.id.0]);
        options[(pick % options.len() as u64) as usize].clone()
    }
}

impl InferenceBackend for OracleBackend {
    fn generate(&self, query: &Query, context: &[RetrievedRecord]) -> Result<InferenceOutput, InferenceError> {
        let p = &self.params;
        let u = rng::unit(self.seed, "oracle-correct", &[self.role.tag(), query.id.0]);
        let correct = u < self.success_probability(query, context);
        let answer = if correct {
            query.truth.clone()
        } else {
            self.wrong_answer(query)
        };
        let level = if correct {
            p.correct_conf_mean
        } else {
            p.incorrect_conf_mean
        };
        let mut tokens = rng::stream(self.seed, "oracle-tokens", &[self.role.tag(), query.id.0]);
        let token_probs = (0..p.tokens_per_answer)
            .map(|_| {
                let jitter = p.conf_spread * (2.0 * tokens.random::<f64>() - 1.0);
                (level.ln() + jitter).exp().clamp(f64::MIN_POSITIVE, 1.0)
            })
            .collect();
        let n_inp = prompt_tokens(query, context);
        Ok(InferenceOutput::new(answer, token_probs, n_inp))
    }
}

/// Rough prompt length: instruction words plus a fixed budget per image.
fn prompt_tokens(query: &Query, context: &[RetrievedRecord]) -> usize {
    const IMAGE_TOKENS: usize = 64;
    let words = |s: &str| s.split_whitespace().count();
    IMAGE_TOKENS
        + words(&query.instruction)
        + context
            .iter()
            .map(|r| IMAGE_TOKENS + words(&r.instruction) + words(&r.ground_truth))
            .sum::<usize>()
}

/// One recorded generation.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub answer: AnswerText,
    pub token_probs: Vec<f64>,
}

/// Replays recorded answers and token probabilities.
#[derive(Clone, Debug, Default)]
pub struct TraceBackend {
    table: BTreeMap<QueryId, TraceEntry>,
}

impl TraceBackend {
    pub fn new(table: BTreeMap<QueryId, TraceEntry>) -> Self {
        Self { table }
    }

    /// Parses `query_id<TAB>answer<TAB>p1 p2 ...` lines.
    pub fn parse(text: &str) -> Result<Self, InferenceError> {
        let mut table = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| InferenceError::TraceFormat {
                line: line_no,
                reason: reason.to_string(),
            };
            let mut fields = line.split('\t');
            let id = fields
                .next()
                .and_then(|f| f.trim().parse::<u64>().ok())
                .ok_or_else(|| bad("query id is not an integer"))?;
            let answer = fields.next().ok_or_else(|| bad("missing answer"))?;
            let probs = fields.next().ok_or_else(|| bad("missing probabilities"))?;
            if fields.next().is_some() {
                return Err(bad("too many fields"));
            }
            let token_probs = probs
                .split_whitespace()
                .map(|p| p.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(&e.to_string()))?;
            if let Some(p) = token_probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
                return Err(InferenceError::BadProbability(*p));
            }
            table.insert(
                QueryId(id),
                TraceEntry {
                    answer: answer.to_string(),
                    token_probs,
                },
            );
        }
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self, InferenceError> {
        let text = std::fs::read_to_string(path).map_err(|err| InferenceError::Io {
            path: path.display().to_string(),
            reason: err.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl InferenceBackend for TraceBackend {
    fn generate(&self, query: &Query, context: &[RetrievedRecord]) -> Result<InferenceOutput, InferenceError> {
        let entry = self
            .table
            .get(&query.id)
            .ok_or(InferenceError::MissingTrace(query.id))?;
        Ok(InferenceOutput::new(
            entry.answer.clone(),
            entry.token_probs.clone(),
            prompt_tokens(query, context),
        ))
    }
}
