//! Embedding providers: the interface the archives call, a structured
//! synthetic provider, and a provider that replays precomputed vectors.

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng;
use crate::types::{ImageId, ImagePayload};

pub const DEFAULT_DIM: usize = 64;

/// Norms below this are treated as zero.
const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("expected dimension {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("no fixture vector for {0}")]
    Missing(String),
    #[error("fixture line {line}: {reason}")]
    Fixture { line: usize, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

/// A unit-norm embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Cosine similarity; both operands are already unit norm.
    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Returns `v / ||v||`.
pub fn normalize(v: Vec<f64>) -> Result<EmbeddingVector, EmbeddingError> {
    let norm = dot(&v, &v).sqrt();
    if !(norm >= MIN_NORM) {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(EmbeddingVector(v.into_iter().map(|x| x / norm).collect()))
}

/// Maps images and instructions to unit vectors. Implementations must be
/// deterministic.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_image(&self, image: &ImagePayload) -> Result<EmbeddingVector, EmbeddingError>;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

/// Noise and spread settings of [`SyntheticEmbedder`].
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticParams {
    pub dim: usize,
    /// Magnitude of the per-image perturbation, orthogonal to the label
    /// direction.
    pub image_noise: f64,
    /// Range of the per-parameter perturbation of instructions. Each slot
    /// filling draws its own magnitude, so same-template similarities
    /// spread out instead of clustering at one value.
    pub text_noise: (f64, f64),
    /// Range of the offset that separates a `family:variant` label from
    /// its family direction. Larger offsets make siblings less similar.
    pub variant_spread: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            image_noise: 0.1,
            text_noise: (0.1, 0.45),
            variant_spread: (0.5, 1.0),
            seed: 0,
        }
    }
}

/// Structured synthetic embeddings.
///
/// Image vectors are a label direction plus seeded noise. Labels of the
/// form `family:variant` share a family direction, so siblings are
/// moderately similar while unrelated families are nearly orthogonal.
/// Instruction vectors come from the template class (the text with every
/// `[...]` slot emptied) plus a small perturbation keyed by the slot
/// contents, so instructions of one template cluster tightly.
#[derive(Clone, Debug, Default)]
pub struct SyntheticEmbedder {
    params: SyntheticParams,
}

impl SyntheticEmbedder {
    pub fn new(params: SyntheticParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &SyntheticParams {
        &self.params
    }

    fn gaussian(&self, domain: &str, parts: &[u64]) -> Vec<f64> {
        let mut rng = rng::stream(self.params.seed, domain, parts);
        (0..self.params.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }

    fn unit_gaussian(&self, domain: &str, parts: &[u64]) -> EmbeddingVector {
        // A 64-d standard normal has norm ~8, so ZeroVector cannot occur.
        normalize(self.gaussian(domain, parts)).expect("gaussian draw has positive norm")
    }

    /// Direction of a scene label before per-image noise.
    pub fn label_direction(&self, label: &str) -> EmbeddingVector {
        match label.split_once(':') {
            Some((family, _)) => {
                let fam = self.unit_gaussian("family", &[rng::hash_str(family)]);
                let offset = orthogonal_unit(
                    &fam,
                    self.gaussian("variant", &[rng::hash_str(label)]),
                );
                let (lo, hi) = self.params.variant_spread;
                let spread = lo + (hi - lo) * rng::unit(self.params.seed, "spread", &[rng::hash_str(label)]);
                perturb(&fam, &offset, spread)
            }
            None => self.unit_gaussian("family", &[rng::hash_str(label)]),
        }
    }

    /// Direction of an instruction template class.
    pub fn template_direction(&self, template: &str) -> EmbeddingVector {
        self.unit_gaussian("template", &[rng::hash_str(template)])
    }
}

impl EmbeddingProvider for SyntheticEmbedder {
    fn dim(&self) -> usize {
        self.params.dim
    }

    fn embed_image(&self, image: &ImagePayload) -> Result<EmbeddingVector, EmbeddingError> {
        let base = self.label_direction(&image.scene_label);
        let noise = orthogonal_unit(
            &base,
            self.gaussian(
                "image-noise",
                &[rng::hash_str(&image.scene_label), image.feature_seed],
            ),
        );
        Ok(perturb(&base, &noise, self.params.image_noise))
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let (template, params) = split_template(text);
        let base = self.template_direction(&template);
        if params.is_empty() {
            return Ok(base);
        }
        let noise = orthogonal_unit(
            &base,
            self.gaussian(
                "text-noise",
                &[rng::hash_str(&template), rng::hash_str(&params)],
            ),
        );
        let (lo, hi) = self.params.text_noise;
        let magnitude = lo
            + (hi - lo)
                * rng::unit(
                    self.params.seed,
                    "text-spread",
                    &[rng::hash_str(&template), rng::hash_str(&params)],
                );
        Ok(perturb(&base, &noise, magnitude))
    }
}

/// Splits an instruction into its template class and the concatenated
/// contents of its `[...]` slots.
pub fn split_template(text: &str) -> (String, String) {
    let mut template = String::with_capacity(text.len());
    let mut params = String::new();
    let mut depth = 0usize;
    for ch in text.chars() {
        match ch {
            '[' => {
                depth += 1;
                if depth == 1 {
                    template.push('[');
                }
            }
            ']' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    template.push(']');
                    params.push('\u{1f}');
                }
            }
            _ if depth > 0 => params.push(ch),
            _ => template.push(ch),
        }
    }
    (template, params)
}

/// Projects `raw` onto the complement of `base` and normalizes it.
fn orthogonal_unit(base: &EmbeddingVector, raw: Vec<f64>) -> EmbeddingVector {
    let along = dot(base.as_slice(), &raw);
    let projected: Vec<f64> = raw
        .iter()
        .zip(base.as_slice())
        .map(|(r, b)| r - along * b)
        .collect();
    normalize(projected).expect("random draw is not parallel to the base")
}

/// Returns `normalize(base + magnitude * direction)`.
pub fn perturb(base: &EmbeddingVector, direction: &EmbeddingVector, magnitude: f64) -> EmbeddingVector {
    let raw = base
        .as_slice()
        .iter()
        .zip(direction.as_slice())
        .map(|(b, d)| b + magnitude * d)
        .collect();
    normalize(raw).unwrap_or_else(|_| base.clone())
}

/// Replays precomputed vectors, e.g. exported from a real embedding model.
///
/// Image fixtures are keyed by numeric image id, text fixtures by the exact
/// instruction text. Both files use one `id<TAB>v1 v2 ... vD` record per
/// line.
#[derive(Clone, Debug, Default)]
pub struct FixtureEmbedder {
    dim: usize,
    images: BTreeMap<ImageId, EmbeddingVector>,
    texts: BTreeMap<String, EmbeddingVector>,
}

impl FixtureEmbedder {
    pub fn from_texts(dim: usize, images: &str, texts: &str) -> Result<Self, EmbeddingError> {
        let mut fixture = Self {
            dim,
            ..Self::default()
        };
        for (key, vector) in parse_fixture(dim, images)? {
            let id = key.parse::<u64>().map_err(|_| EmbeddingError::Fixture {
                line: 0,
                reason: format!("image id {key:?} is not an integer"),
            })?;
            fixture.images.insert(ImageId(id), vector);
        }
        for (key, vector) in parse_fixture(dim, texts)? {
            fixture.texts.insert(key, vector);
        }
        Ok(fixture)
    }

    pub fn load(dim: usize, images: &Path, texts: &Path) -> Result<Self, EmbeddingError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|err| EmbeddingError::Io {
                path: p.display().to_string(),
                reason: err.to_string(),
            })
        };
        Self::from_texts(dim, &read(images)?, &read(texts)?)
    }
}

/// Parses `id<TAB>floats` lines, normalizing each vector.
pub fn parse_fixture(dim: usize, text: &str) -> Result<Vec<(String, EmbeddingVector)>, EmbeddingError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, values) = line.split_once('\t').ok_or(EmbeddingError::Fixture {
            line: line_no,
            reason: "missing tab separator".into(),
        })?;
        let values: Vec<f64> = values
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|err| EmbeddingError::Fixture {
                line: line_no,
                reason: err.to_string(),
            })?;
        if values.len() != dim {
            return Err(EmbeddingError::Dimension {
                expected: dim,
                actual: values.len(),
            });
        }
        out.push((key.to_string(), normalize(values)?));
    }
    Ok(out)
}

impl EmbeddingProvider for FixtureEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_image(&self, image: &ImagePayload) -> Result<EmbeddingVector, EmbeddingError> {
        self.images
            .get(&image.image_id)
            .cloned()
            .ok_or_else(|| EmbeddingError::Missing(format!("image {}", image.image_id)))
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        self.texts
            .get(text)
            .cloned()
            .ok_or_else(|| EmbeddingError::Missing(format!("instruction {text:?}")))
    }
}
