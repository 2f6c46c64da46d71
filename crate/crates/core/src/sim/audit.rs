//! Post-run checks over traces and logs.

use std::collections::{BTreeMap, BTreeSet};

use crate::ground::{RetrievalLog, TaskClass};
use crate::link::{ContactWindow, Direction, LinkParams, MessageKind, Outcome, TraceEntry};
use crate::sim::engine::RunOutput;
use crate::types::QueryId;

/// Slack for float comparisons on trace times.
const EPS: f64 = 1e-9;

/// Checks the protocol rules over a full trace. Returns one message per
/// violation.
pub fn validate_trace(trace: &[TraceEntry], windows: &[ContactWindow], link: &LinkParams) -> Vec<String> {
    let mut errors = Vec::new();
    let mut by_window: BTreeMap<usize, Vec<&TraceEntry>> = BTreeMap::new();
    for e in trace {
        by_window.entry(e.window).or_default().push(e);
    }
    for (w, entries) in by_window {
        let Some(window) = windows.get(w) else {
            errors.push(format!("trace refers to unknown window {w}"));
            continue;
        };
        let mut last_end = f64::NEG_INFINITY;
        let mut round_open = false;
        let mut expected_next: Option<MessageKind> = None;
        let mut bytes = [0u64; 2];
        for e in entries {
            let tag = format!("window {w} at {:.6} ({})", e.start, e.kind.as_str());
            if e.start + EPS < window.open || e.start >= window.close {
                errors.push(format!("{tag}: starts outside the window"));
            }
            if e.start + EPS < last_end {
                errors.push(format!("{tag}: overlaps the previous message"));
            }
            match e.outcome {
                Outcome::Delivered if e.end >= window.close => {
                    errors.push(format!("{tag}: delivered at or after the window close"))
                }
                Outcome::Dropped if (e.end - window.close).abs() > EPS => {
                    errors.push(format!("{tag}: dropped before the window closed"))
                }
                _ => {}
            }
            if e.kind.direction() != e.direction {
                errors.push(format!("{tag}: wrong direction"));
            }
            if let Some(k) = expected_next {
                if e.kind != k {
                    errors.push(format!("{tag}: expected {} next", k.as_str()));
                }
            }
            match e.kind {
                MessageKind::PriorityQueries => {
                    if round_open {
                        errors.push(format!("{tag}: new priority round before the last one finished"));
                    }
                    round_open = true;
                }
                MessageKind::SecondaryChunk => {
                    if round_open {
                        errors.push(format!("{tag}: secondary chunk during a priority round"));
                    }
                    if e.priority_len > 0 {
                        errors.push(format!("{tag}: secondary chunk while {} priority queries wait", e.priority_len));
                    }
                }
                MessageKind::Metadata | MessageKind::MissingRequest | MessageKind::FullRecords => {
                    if !round_open {
                        errors.push(format!("{tag}: update message outside a priority round"));
                    }
                }
                MessageKind::Ack => {}
            }
            expected_next = None;
            if e.outcome == Outcome::Delivered {
                let slot = usize::from(e.direction == Direction::Down);
                bytes[slot] += e.size_bytes;
                last_end = e.end;
                match e.kind {
                    MessageKind::PriorityQueries => {}
                    MessageKind::Metadata => expected_next = Some(MessageKind::MissingRequest),
                    MessageKind::MissingRequest => expected_next = Some(MessageKind::FullRecords),
                    MessageKind::FullRecords => round_open = false,
                    MessageKind::SecondaryChunk => expected_next = Some(MessageKind::Ack),
                    MessageKind::Ack => {}
                }
            } else {
                last_end = e.end;
            }
        }
        let span = window.duration();
        for (slot, dir) in [(0, Direction::Up), (1, Direction::Down)] {
            let budget = link.rate(dir) * span / 8.0;
            if bytes[slot] as f64 > budget + 1.0 {
                errors.push(format!(
                    "window {w}: {} bytes {} exceed the budget {budget:.0}",
                    dir.as_str(),
                    bytes[slot]
                ));
            }
        }
    }
    errors
}

/// Secondary retrievals must never start while priority retrievals wait.
pub fn validate_retrievals(log: &[RetrievalLog]) -> Vec<String> {
    log.iter()
        .filter(|l| l.class == TaskClass::Secondary && l.priority_waiting > 0)
        .map(|l| {
            format!(
                "secondary retrieval of query {} with {} priority queries waiting",
                l.query, l.priority_waiting
            )
        })
        .collect()
}

/// Every capture is answered at most once, and answered or reported
/// unanswered exactly once.
pub fn validate_answers(out: &RunOutput) -> Vec<String> {
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    for r in &out.records {
        if !seen.insert(r.id) {
            errors.push(format!("query {} answered twice", r.id));
        }
        if r.latency < 0.0 {
            errors.push(format!("query {} has negative latency", r.id));
        }
    }
    let captured: BTreeSet<QueryId> = out.captures.iter().map(|q| q.id).collect();
    let unanswered: BTreeSet<QueryId> = out.unanswered.iter().copied().collect();
    if seen.intersection(&unanswered).next().is_some() {
        errors.push("a query is both answered and unanswered".into());
    }
    let union: BTreeSet<QueryId> = seen.union(&unanswered).copied().collect();
    if union != captured {
        errors.push("answered and unanswered queries do not partition the captures".into());
    }
    errors
}

/// All post-run checks.
pub fn audit(out: &RunOutput, link: &LinkParams) -> Vec<String> {
    let mut errors = validate_trace(&out.trace, &out.windows, link);
    errors.extend(validate_retrievals(&out.retrieval_log));
    errors.extend(validate_answers(out));
    errors
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::Phase;

    fn params() -> LinkParams {
        LinkParams {
            uplink_rate: 8e3,
            downlink_rate: 8e3,
            chunk_size: 2,
            propagation_delay: 0.0,
        }
    }

    fn entry(kind: MessageKind, start: f64, end: f64, pri: usize) -> TraceEntry {
        TraceEntry {
            window: 0,
            start,
            end,
            direction: kind.direction(),
            kind,
            size_bytes: 100,
            phase: Phase::Idle,
            outcome: Outcome::Delivered,
            priority_len: pri,
            ids: vec![],
        }
    }

    #[test]
    fn accepts_a_clean_round() {
        let w = [ContactWindow { open: 0.0, close: 10.0 }];
        let t = vec![
            entry(MessageKind::PriorityQueries, 0.0, 1.0, 2),
            entry(MessageKind::Metadata, 1.0, 2.0, 0),
            entry(MessageKind::MissingRequest, 2.0, 3.0, 0),
            entry(MessageKind::FullRecords, 3.0, 4.0, 0),
            entry(MessageKind::SecondaryChunk, 4.0, 5.0, 0),
            entry(MessageKind::Ack, 5.0, 6.0, 0),
        ];
        assert_eq!(validate_trace(&t, &w, &params()), Vec::<String>::new());
    }

    #[test]
    fn flags_secondary_inside_round() {
        let w = [ContactWindow { open: 0.0, close: 10.0 }];
        let t = vec![
            entry(MessageKind::PriorityQueries, 0.0, 1.0, 2),
            entry(MessageKind::SecondaryChunk, 1.0, 2.0, 0),
        ];
        assert!(!validate_trace(&t, &w, &params()).is_empty());
        let t = vec![entry(MessageKind::SecondaryChunk, 0.0, 1.0, 3)];
        assert!(!validate_trace(&t, &w, &params()).is_empty());
    }

    #[test]
    fn flags_late_delivery_and_overlap() {
        let w = [ContactWindow { open: 0.0, close: 10.0 }];
        let t = vec![entry(MessageKind::SecondaryChunk, 9.0, 10.0, 0)];
        assert!(!validate_trace(&t, &w, &params()).is_empty());
        let t = vec![
            entry(MessageKind::SecondaryChunk, 0.0, 2.0, 0),
            entry(MessageKind::Ack, 1.0, 3.0, 0),
        ];
        assert!(!validate_trace(&t, &w, &params()).is_empty());
    }

    #[test]
    fn flags_budget_overrun() {
        let w = [ContactWindow { open: 0.0, close: 1.0 }];
        let mut e = entry(MessageKind::SecondaryChunk, 0.0, 0.5, 0);
        e.size_bytes = 5000;
        assert!(validate_trace(&[e], &w, &params()).iter().any(|m| m.contains("budget")));
    }
}
