//! Archive corpus files and the synthetic corpus generator.
//!
//! A corpus file has one record per line:
//! `image_id<TAB>scene_label<TAB>feature_seed<TAB>record_bytes<TAB>instruction<TAB>answer[<TAB>instruction<TAB>answer]...`

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use thiserror::Error;

use crate::rng;
use crate::types::{ArchiveRecord, ImagePayload, InstructionText, RecordError};

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("corpus line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("corpus line {line}: {source}")]
    Record { line: usize, source: RecordError },
    #[error("corpus line {line}: image {id} appears twice")]
    DuplicateImage { line: usize, id: u64 },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

pub fn parse_corpus(text: &str) -> Result<Vec<ArchiveRecord>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| CorpusError::Parse { line: line_no, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 6 || (fields.len() - 4) % 2 != 0 {
            return Err(bad(format!(
                "expected 4 header fields and instruction/answer pairs, found {} fields",
                fields.len()
            )));
        }
        let int = |i: usize, name: &str| {
            fields[i]
                .trim()
                .parse::<u64>()
                .map_err(|_| bad(format!("{name} {:?} is not an integer", fields[i])))
        };
        let id = int(0, "image_id")?;
        let seed = int(2, "feature_seed")?;
        let bytes = int(3, "record_bytes")?;
        if !seen.insert(id) {
            return Err(CorpusError::DuplicateImage { line: line_no, id });
        }
        let pairs = fields[4..]
            .chunks(2)
            .map(|c| (c[0].to_string(), c[1].to_string()))
            .collect();
        let record = ArchiveRecord::new(ImagePayload::new(id, seed, fields[1]), pairs, bytes)
            .map_err(|source| CorpusError::Record { line: line_no, source })?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<ArchiveRecord>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|err| CorpusError::Io {
        path: path.display().to_string(),
        reason: err.to_string(),
    })?;
    parse_corpus(&text)
}

pub fn format_corpus(records: &[ArchiveRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}",
            r.image.image_id, r.image.scene_label, r.image.feature_seed, r.record_bytes
        );
        for (instruction, answer) in &r.pairs {
            let _ = write!(out, "\t{instruction}\t{answer}");
        }
        out.push('\n');
    }
    out
}

/// Instruction templates with a bracketed slot, and the slot values each
/// template is used with.
pub fn instruction_vocabulary() -> Vec<InstructionText> {
    const TEMPLATES: [(&str, [&str; 4]); 5] = [
        ("Is there a [{}] in the image?", ["road", "bridge", "river", "runway"]),
        ("How many [{}] are visible?", ["ships", "vehicles", "buildings", "trees"]),
        ("What is the main land use near the [{}]?", ["coast", "center", "border", "highway"]),
        ("Is the [{}] part covered by vegetation?", ["north", "south", "east", "west"]),
        ("What kind of scene is shown in this [{}] image?", ["daytime", "cloudy", "summer", "winter"]),
    ];
    TEMPLATES
        .iter()
        .flat_map(|(t, params)| params.iter().map(move |p| t.replace("{}", p)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub families: Vec<String>,
    pub variants: Vec<String>,
    pub images_per_label: usize,
    pub pairs_per_image: usize,
    /// Instructions records draw their pairs from.
    pub instructions: Vec<InstructionText>,
    pub record_bytes: u64,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn labels(&self) -> Vec<String> {
        self.families
            .iter()
            .flat_map(|f| self.variants.iter().map(move |v| format!("{f}:{v}")))
            .collect()
    }
}

impl Default for CorpusSpec {
    fn default() -> Self {
        let words = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            families: words(&["urban", "water", "farm", "forest", "transport", "desert"]),
            variants: words(&["a", "b", "c", "d"]),
            images_per_label: 25,
            pairs_per_image: 4,
            instructions: instruction_vocabulary(),
            record_bytes: 100_000,
            seed: 7,
        }
    }
}

/// Builds a labelled corpus. Image ids are consecutive from 1; every pair's
/// answer is the image's scene label.
pub fn synthetic_corpus(spec: &CorpusSpec) -> Vec<ArchiveRecord> {
    let pairs = spec.pairs_per_image.min(spec.instructions.len()).max(1);
    let mut out = Vec::new();
    let mut next_id = 1u64;
    for label in spec.labels() {
        for j in 0..spec.images_per_label {
            let id = next_id;
            next_id += 1;
            let mut r = rng::stream(spec.seed, "corpus-pairs", &[id]);
            let mut picks = sample(&mut r, spec.instructions.len(), pairs).into_vec();
            picks.sort_unstable();
            let record = ArchiveRecord {
                image: ImagePayload::new(id, rng::derive_seed(spec.seed, "corpus-image", &[id, j as u64]), &label),
                pairs: picks
                    .into_iter()
                    .map(|i| (spec.instructions[i].clone(), label.clone()))
                    .collect(),
                record_bytes: spec.record_bytes,
            };
            out.push(record);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let spec = CorpusSpec {
            images_per_label: 2,
            ..CorpusSpec::default()
        };
        let corpus = synthetic_corpus(&spec);
        assert_eq!(corpus.len(), 48);
        assert!(corpus.iter().all(|r| r.pairs.len() == 4 && r.validate().is_ok()));
        assert_eq!(parse_corpus(&format_corpus(&corpus)).unwrap(), corpus);
    }

    #[test]
    fn deterministic() {
        let spec = CorpusSpec::default();
        assert_eq!(synthetic_corpus(&spec), synthetic_corpus(&spec));
    }

    #[test]
    fn vocabulary_shape() {
        let v = instruction_vocabulary();
        assert_eq!(v.len(), 20);
        assert_eq!(v[0], "Is there a [road] in the image?");
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(parse_corpus("1\ta:b\t3\t4\tq"), Err(CorpusError::Parse { line: 1, .. })));
        assert!(matches!(parse_corpus("x\ta:b\t3\t4\tq\ta"), Err(CorpusError::Parse { .. })));
        assert!(matches!(
            parse_corpus("1\ta:b\t3\t4\tq\ta\tq\tb"),
            Err(CorpusError::Record { .. })
        ));
        assert!(matches!(
            parse_corpus("1\ta:b\t3\t4\tq\ta\n1\ta:b\t3\t4\tq\ta"),
            Err(CorpusError::DuplicateImage { line: 2, id: 1 })
        ));
    }
}
