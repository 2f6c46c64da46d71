//! Value types shared by every node: identifiers, queries and archive records.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Simulation time in seconds.
pub type SimTime = f64;

/// Natural-language instruction. Parameter slots are written in square
/// brackets, e.g. `Is there a [road] in the image?`.
pub type InstructionText = String;

/// Answer text produced by a model or stored as ground truth.
pub type AnswerText = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImageId(pub u64);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryId(pub u64);

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Stand-in for pixel data. The synthetic embedding provider derives the
/// image vector from `scene_label` and `feature_seed`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImagePayload {
    pub image_id: ImageId,
    pub feature_seed: u64,
    pub scene_label: String,
}

impl ImagePayload {
    pub fn new(image_id: u64, feature_seed: u64, scene_label: impl Into<String>) -> Self {
        Self {
            image_id: ImageId(image_id),
            feature_seed,
            scene_label: scene_label.into(),
        }
    }
}

/// A captured image plus the instruction to apply to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub id: QueryId,
    pub capture_time: SimTime,
    pub image: ImagePayload,
    pub instruction: InstructionText,
    pub image_bytes: u64,
    /// Expected answer, used only for accuracy accounting.
    pub truth: AnswerText,
}

impl Query {
    pub fn new(
        id: u64,
        capture_time: SimTime,
        image: ImagePayload,
        instruction: impl Into<String>,
        image_bytes: u64,
    ) -> Self {
        let truth = image.scene_label.clone();
        Self {
            id: QueryId(id),
            capture_time,
            image,
            instruction: instruction.into(),
            image_bytes,
            truth,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("record for image {0} has no instruction-answer pairs")]
    NoPairs(ImageId),
    #[error("record for image {0} repeats instruction {1:?}")]
    DuplicateInstruction(ImageId, String),
}

/// An archived image with its instruction-answer pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchiveRecord {
    pub image: ImagePayload,
    pub pairs: Vec<(InstructionText, AnswerText)>,
    pub record_bytes: u64,
}

impl ArchiveRecord {
    pub fn new(
        image: ImagePayload,
        pairs: Vec<(InstructionText, AnswerText)>,
        record_bytes: u64,
    ) -> Result<Self, RecordError> {
        let record = Self {
            image,
            pairs,
            record_bytes,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.pairs.is_empty() {
            return Err(RecordError::NoPairs(self.image.image_id));
        }
        let mut seen = BTreeSet::new();
        for (instruction, _) in &self.pairs {
            if !seen.insert(instruction.as_str()) {
                return Err(RecordError::DuplicateInstruction(
                    self.image.image_id,
                    instruction.clone(),
                ));
            }
        }
        Ok(())
    }

    pub fn id(&self) -> ImageId {
        self.image.image_id
    }
}
