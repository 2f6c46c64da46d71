//! In-window protocol cases driven through `run_window`.

use std::sync::Arc;

use satground::archive::Archive;
use satground::config::default_config;
use satground::embedding::SyntheticEmbedder;
use satground::ground::Ground;
use satground::inference::{OracleBackend, OracleParams, Role};
use satground::link::{
    run_window, ContactWindow, LinkParams, LinkSession, MessageKind, Outcome, TraceEntry, HEADER_BYTES,
};
use satground::satellite::Satellite;
use satground::types::{ArchiveRecord, ImagePayload, Query, QueryId};

const INSTRUCTION: &str = "Is there a [road] in the image?";

fn corpus() -> Vec<ArchiveRecord> {
    (1..=8u64)
        .map(|i| {
            let label = if i <= 4 { "water:a" } else { "farm:b" };
            ArchiveRecord::new(
                ImagePayload::new(i, i, label),
                vec![(INSTRUCTION.to_string(), label.to_string())],
                50_000,
            )
            .unwrap()
        })
        .collect()
}

fn nodes(sat_records: &[ArchiveRecord], priority: bool, chunk: usize) -> (Satellite, Ground, LinkSession) {
    let provider = Arc::new(SyntheticEmbedder::default());
    let mut cfg = default_config();
    cfg.secondary_chunk_size = chunk;
    let mut sat_archive = Archive::with_lru(provider.clone(), cfg.sat_archive_cap);
    for r in sat_records {
        sat_archive.insert(r).unwrap();
    }
    let mut ground_archive = Archive::new(provider);
    for r in &corpus() {
        ground_archive.insert(r).unwrap();
    }
    let sat_backend = Arc::new(OracleBackend::new(OracleParams::satellite(), Role::Satellite, 1));
    let ground_backend = Arc::new(OracleBackend::new(OracleParams::ground(), Role::Ground, 1));
    let link = LinkParams {
        uplink_rate: cfg.uplink_rate,
        downlink_rate: cfg.downlink_rate,
        chunk_size: chunk,
        propagation_delay: 0.0,
    };
    (
        Satellite::new(cfg.clone(), sat_archive, sat_backend, priority),
        Ground::new(cfg.k, ground_archive, ground_backend),
        LinkSession::new(link),
    )
}

fn query(id: u64, label: &str) -> Query {
    Query::new(id, id as f64, ImagePayload::new(1000 + id, 77 + id, label), INSTRUCTION, 200_000)
}

fn kinds(trace: &[TraceEntry]) -> Vec<MessageKind> {
    trace.iter().map(|e| e.kind).collect()
}

#[test]
fn empty_buffers_send_nothing() {
    let (mut sat, mut ground, mut session) = nodes(&[], true, 4);
    let trace = run_window(0, ContactWindow { open: 0.0, close: 300.0 }, &mut session, &mut sat, &mut ground).unwrap();
    assert!(trace.is_empty());
}

#[test]
fn resident_images_yield_an_empty_record_transfer() {
    let (mut sat, mut ground, mut session) = nodes(&corpus(), true, 4);
    sat.cache_for_transmission(query(1, "water:a")).unwrap();
    sat.cache_for_transmission(query(2, "farm:b")).unwrap();
    let trace = run_window(0, ContactWindow { open: 0.0, close: 300.0 }, &mut session, &mut sat, &mut ground).unwrap();
    assert_eq!(
        kinds(&trace),
        [
            MessageKind::PriorityQueries,
            MessageKind::Metadata,
            MessageKind::MissingRequest,
            MessageKind::FullRecords
        ]
    );
    assert!(trace.iter().all(|e| e.outcome == Outcome::Delivered));
    assert_eq!(trace[0].ids.len(), 2);
    assert!(!trace[1].ids.is_empty());
    assert!(trace[2].ids.is_empty());
    assert!(trace[3].ids.is_empty());
    assert_eq!(trace[3].size_bytes, HEADER_BYTES);
    assert_eq!(sat.buffer().len(), 0);
    assert!(ground.has_received(QueryId(1)) && ground.has_received(QueryId(2)));
}

#[test]
fn missing_images_are_sent_and_installed() {
    let (mut sat, mut ground, mut session) = nodes(&[], true, 4);
    sat.cache_for_transmission(query(1, "water:a")).unwrap();
    let trace = run_window(0, ContactWindow { open: 0.0, close: 300.0 }, &mut session, &mut sat, &mut ground).unwrap();
    let advertised = &trace[1].ids;
    assert_eq!(advertised.len(), 5);
    assert_eq!(&trace[2].ids, advertised);
    assert_eq!(&trace[3].ids, advertised);
    assert_eq!(trace[3].size_bytes, HEADER_BYTES + 5 * 50_000);
    assert_eq!(sat.archive().len(), 5);
}

#[test]
fn close_mid_chunk_three_keeps_that_chunk() {
    let setup = || {
        let (mut sat, ground, session) = nodes(&corpus(), false, 2);
        for i in 1..=8 {
            sat.cache_for_transmission(query(i, "water:a")).unwrap();
        }
        (sat, ground, session)
    };

    // Dry run to learn when chunk 3 is on the wire.
    let (mut sat, mut ground, mut session) = setup();
    let full = run_window(0, ContactWindow { open: 0.0, close: 300.0 }, &mut session, &mut sat, &mut ground).unwrap();
    let chunks: Vec<&TraceEntry> = full.iter().filter(|e| e.kind == MessageKind::SecondaryChunk).collect();
    assert_eq!(chunks.len(), 4);
    let cut = 0.5 * (chunks[2].start + chunks[2].end);

    let (mut sat, mut ground, mut session) = setup();
    let first = run_window(0, ContactWindow { open: 0.0, close: cut }, &mut session, &mut sat, &mut ground).unwrap();
    assert_eq!(
        kinds(&first),
        [
            MessageKind::SecondaryChunk,
            MessageKind::Ack,
            MessageKind::SecondaryChunk,
            MessageKind::Ack,
            MessageKind::SecondaryChunk
        ]
    );
    assert_eq!(first[4].outcome, Outcome::Dropped);
    assert_eq!(first[4].end, cut);
    let left: Vec<QueryId> = sat.buffer().secondary().iter().map(|q| q.id).collect();
    assert_eq!(left, [5, 6, 7, 8].map(QueryId));
    assert!((1..=4).all(|i| ground.has_received(QueryId(i))));
    assert!((5..=8).all(|i| !ground.has_received(QueryId(i))));

    let second = run_window(1, ContactWindow { open: 60.0, close: 360.0 }, &mut session, &mut sat, &mut ground).unwrap();
    assert_eq!(second[0].kind, MessageKind::SecondaryChunk);
    assert_eq!(second[0].ids, first[4].ids);
    assert!(second.iter().all(|e| e.outcome == Outcome::Delivered));
    assert_eq!(sat.buffer().len(), 0);
    assert!((1..=8).all(|i| ground.has_received(QueryId(i))));
    assert_eq!(ground.secondary_waiting(), 8);
}
