//! Per-query records, run summaries and their text formats.

use std::fmt::Write as _;

use crate::ground::TaskClass;
use crate::link::TraceEntry;
use crate::satellite::TransmitReason;
use crate::types::{QueryId, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Disposition {
    Onboard,
    Ground,
}

impl Disposition {
    pub fn as_str(self) -> &'static str {
        match self {
            Disposition::Onboard => "onboard",
            Disposition::Ground => "ground",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryRecord {
    pub id: QueryId,
    pub capture_time: SimTime,
    pub label: String,
    pub disposition: Disposition,
    pub answer_time: SimTime,
    pub latency: f64,
    pub answer: String,
    pub correct: bool,
    /// Why the satellite transmitted the query; `None` when accepted.
    pub transmit_reason: Option<TransmitReason>,
    pub survivors: usize,
    pub confidence: Option<f64>,
    pub ground_class: Option<TaskClass>,
}

pub const CSV_HEADER: &str = "query_id,capture_time,label,disposition,answer_time,latency,correct,onboard_outcome,survivors,confidence,ground_class";

pub fn records_csv(records: &[QueryRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{:.6},{:.6},{},{},{},{},{}",
            r.id,
            r.capture_time,
            r.label,
            r.disposition.as_str(),
            r.answer_time,
            r.latency,
            u8::from(r.correct),
            r.transmit_reason.map_or("accept", TransmitReason::as_str),
            r.survivors,
            r.confidence.map_or(String::new(), |c| format!("{c:.6}")),
            r.ground_class.map_or("", TaskClass::as_str),
        );
    }
    out
}

/// One backlog sample: queries captured but not yet answered.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BacklogSample {
    pub time: SimTime,
    pub outstanding: usize,
    pub buffered: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub captured: usize,
    pub answered: usize,
    pub unanswered: usize,
    pub accuracy: f64,
    /// Accuracy over queries accepted onboard; `None` if there were none.
    pub onboard_accuracy: Option<f64>,
    pub onboard_fraction: f64,
    pub mean_latency: f64,
    pub median_latency: f64,
    pub max_latency: f64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub max_satellite_archive: usize,
    pub backlog: Vec<BacklogSample>,
}

impl RunSummary {
    pub fn from_records(records: &[QueryRecord], captured: usize) -> Self {
        let answered = records.len();
        let mut s = RunSummary {
            captured,
            answered,
            unanswered: captured.saturating_sub(answered),
            ..RunSummary::default()
        };
        if answered == 0 {
            return s;
        }
        let n = answered as f64;
        s.accuracy = records.iter().filter(|r| r.correct).count() as f64 / n;
        let onboard: Vec<&QueryRecord> = records
            .iter()
            .filter(|r| r.disposition == Disposition::Onboard)
            .collect();
        s.onboard_fraction = onboard.len() as f64 / n;
        if !onboard.is_empty() {
            s.onboard_accuracy = Some(onboard.iter().filter(|r| r.correct).count() as f64 / onboard.len() as f64);
        }
        let mut lat: Vec<f64> = records.iter().map(|r| r.latency).collect();
        lat.sort_by(f64::total_cmp);
        s.mean_latency = lat.iter().sum::<f64>() / n;
        s.median_latency = if answered % 2 == 1 {
            lat[answered / 2]
        } else {
            (lat[answered / 2 - 1] + lat[answered / 2]) / 2.0
        };
        s.max_latency = lat[answered - 1];
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "captured = {}", self.captured);
        let _ = writeln!(out, "answered = {}", self.answered);
        let _ = writeln!(out, "unanswered = {}", self.unanswered);
        let _ = writeln!(out, "accuracy = {:.6}", self.accuracy);
        let _ = writeln!(
            out,
            "onboard_accuracy = {}",
            self.onboard_accuracy.map_or("na".to_string(), |a| format!("{a:.6}"))
        );
        let _ = writeln!(out, "onboard_fraction = {:.6}", self.onboard_fraction);
        let _ = writeln!(out, "ground_fraction = {:.6}", if self.answered == 0 { 0.0 } else { 1.0 - self.onboard_fraction });
        let _ = writeln!(out, "mean_latency = {:.6}", self.mean_latency);
        let _ = writeln!(out, "median_latency = {:.6}", self.median_latency);
        let _ = writeln!(out, "max_latency = {:.6}", self.max_latency);
        let _ = writeln!(out, "uplink_bytes = {}", self.uplink_bytes);
        let _ = writeln!(out, "downlink_bytes = {}", self.downlink_bytes);
        let _ = writeln!(out, "max_satellite_archive = {}", self.max_satellite_archive);
        out
    }

    /// One-line digest for terminal output.
    pub fn one_line(&self) -> String {
        format!(
            "answered={}/{} accuracy={:.4} onboard={:.4} mean_latency={:.3}s median={:.3}s max={:.3}s",
            self.answered,
            self.captured,
            self.accuracy,
            self.onboard_fraction,
            self.mean_latency,
            self.median_latency,
            self.max_latency
        )
    }
}

pub fn backlog_csv(samples: &[BacklogSample]) -> String {
    let mut out = String::from("time,outstanding,buffered\n");
    for s in samples {
        let _ = writeln!(out, "{:.6},{},{}", s.time, s.outstanding, s.buffered);
    }
    out
}

pub fn trace_text(trace: &[TraceEntry]) -> String {
    trace.iter().map(|e| format!("{e}\n")).collect()
}

/// Least-squares slope of `y` against its index.
pub fn index_slope(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean_x = (nf - 1.0) / 2.0;
    let mean_y = y.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (v - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, latency: f64, onboard: bool, correct: bool) -> QueryRecord {
        QueryRecord {
            id: QueryId(id),
            capture_time: 0.0,
            label: "a:b".into(),
            disposition: if onboard { Disposition::Onboard } else { Disposition::Ground },
            answer_time: latency,
            latency,
            answer: "a:b".into(),
            correct,
            transmit_reason: None,
            survivors: 5,
            confidence: Some(0.9),
            ground_class: None,
        }
    }

    #[test]
    fn summary_statistics() {
        let rs = vec![rec(0, 1.0, true, true), rec(1, 3.0, false, false), rec(2, 8.0, false, true)];
        let s = RunSummary::from_records(&rs, 4);
        assert_eq!(s.unanswered, 1);
        assert!((s.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.onboard_accuracy, Some(1.0));
        assert_eq!(s.mean_latency, 4.0);
        assert_eq!(s.median_latency, 3.0);
        assert_eq!(s.max_latency, 8.0);
        assert!((s.onboard_fraction - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_summary() {
        let s = RunSummary::from_records(&[], 0);
        assert_eq!(s.answered, 0);
        assert_eq!(s.onboard_accuracy, None);
        assert!(s.to_text().contains("mean_latency = 0.000000"));
    }

    #[test]
    fn slopes() {
        assert_eq!(index_slope(&[1.0, 1.0, 1.0]), 0.0);
        assert!((index_slope(&[0.0, 2.0, 4.0, 6.0]) - 2.0).abs() < 1e-12);
        assert_eq!(index_slope(&[5.0]), 0.0);
    }

    #[test]
    fn csv_has_one_line_per_record() {
        let csv = records_csv(&[rec(0, 1.0, true, true)]);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,0.000000,a:b,onboard,"));
    }
}
