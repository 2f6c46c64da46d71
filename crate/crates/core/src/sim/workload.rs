//! Capture workload: which scene each captured image shows and which
//! instruction comes with it.

use rand::seq::index::sample;
use rand::Rng;

use crate::rng;
use crate::types::{ImagePayload, InstructionText, Query, SimTime};

/// Image ids of captured images start here, clear of corpus ids.
pub const CAPTURE_ID_BASE: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ByteSize {
    Const(u64),
    /// Inclusive range.
    Uniform(u64, u64),
}

impl ByteSize {
    pub fn parse(text: &str) -> Option<Self> {
        match text.split_once("..") {
            Some((lo, hi)) => {
                let lo = lo.trim().parse().ok()?;
                let hi = hi.trim().parse().ok()?;
                (0 < lo && lo <= hi).then_some(ByteSize::Uniform(lo, hi))
            }
            None => text.trim().parse().ok().filter(|v| *v > 0).map(ByteSize::Const),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ByteSize::Const(v) => v as f64,
            ByteSize::Uniform(lo, hi) => (lo + hi) as f64 / 2.0,
        }
    }
}

impl std::fmt::Display for ByteSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ByteSize::Const(v) => write!(f, "{v}"),
            ByteSize::Uniform(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

/// The mission moves through phases; each phase observes a few scene labels.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    /// Labels the mission can observe.
    pub labels: Vec<String>,
    pub labels_per_phase: usize,
    pub phase_duration: f64,
    pub instructions: Vec<InstructionText>,
    pub image_bytes: ByteSize,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.labels.is_empty() {
            return Err("workload needs at least one label".into());
        }
        if self.instructions.is_empty() {
            return Err("workload needs at least one instruction".into());
        }
        if self.labels_per_phase == 0 {
            return Err("labels_per_phase must be at least 1".into());
        }
        if !(self.phase_duration > 0.0) {
            return Err("phase_duration must be positive".into());
        }
        Ok(())
    }

    /// Labels active during mission phase `phase`.
    pub fn phase_labels(&self, seed: u64, phase: u64) -> Vec<String> {
        let n = self.labels_per_phase.min(self.labels.len());
        let mut r = rng::stream(seed, "phase-labels", &[phase]);
        let mut picks = sample(&mut r, self.labels.len(), n).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| self.labels[i].clone()).collect()
    }

    /// The `index`-th capture, taken at time `t`.
    pub fn query(&self, seed: u64, index: u64, t: SimTime) -> Query {
        let phase = (t / self.phase_duration).floor().max(0.0) as u64;
        let labels = self.phase_labels(seed, phase);
        let mut r = rng::stream(seed, "capture", &[index]);
        let label = &labels[r.random_range(0..labels.len())];
        let instruction = &self.instructions[r.random_range(0..self.instructions.len())];
        let bytes = match self.image_bytes {
            ByteSize::Const(v) => v,
            ByteSize::Uniform(lo, hi) => r.random_range(lo..=hi),
        };
        let image = ImagePayload::new(CAPTURE_ID_BASE + index, r.random::<u64>(), label.as_str());
        Query::new(index, t, image, instruction.as_str(), bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> WorkloadSpec {
        WorkloadSpec {
            labels: (0..10).map(|i| format!("f:{i}")).collect(),
            labels_per_phase: 3,
            phase_duration: 100.0,
            instructions: vec!["a".into(), "b".into()],
            image_bytes: ByteSize::Uniform(10, 20),
        }
    }

    #[test]
    fn queries_follow_phases() {
        let s = spec();
        let active = s.phase_labels(1, 0);
        assert_eq!(active.len(), 3);
        for i in 0..50 {
            let q = s.query(1, i, i as f64);
            assert!(active.contains(&q.image.scene_label));
            assert!((10..=20).contains(&q.image_bytes));
            assert_eq!(q, s.query(1, i, i as f64));
        }
    }

    #[test]
    fn byte_sizes_parse() {
        assert_eq!(ByteSize::parse("5"), Some(ByteSize::Const(5)));
        assert_eq!(ByteSize::parse("5..9"), Some(ByteSize::Uniform(5, 9)));
        assert_eq!(ByteSize::parse("0"), None);
        assert_eq!(ByteSize::parse("9..5"), None);
        assert_eq!(ByteSize::parse(&ByteSize::Uniform(3, 4).to_string()), Some(ByteSize::Uniform(3, 4)));
    }
}
