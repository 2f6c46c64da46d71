//! Contact windows, transfer accounting and the in-window transmission
//! protocol between the satellite and the ground station.

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::ground::{Ground, GroundError};
use crate::satellite::{Satellite, SatelliteError};
use crate::types::{ImageId, Query, QueryId, SimTime};

/// Fixed framing overhead of every message.
pub const HEADER_BYTES: u64 = 64;
/// Size of one id entry in metadata, requests and acks.
pub const ID_ENTRY_BYTES: u64 = 16;

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("contact duration {contact} must be positive and shorter than the period {period}")]
    Geometry { period: f64, contact: f64 },
    #[error("schedule line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("window {index} overlaps or precedes the previous one")]
    Overlap { index: usize },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Satellite(#[from] SatelliteError),
    #[error(transparent)]
    Ground(#[from] GroundError),
}

/// Half-open interval `[open, close)` of usable contact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactWindow {
    pub open: SimTime,
    pub close: SimTime,
}

impl ContactWindow {
    pub fn duration(&self) -> f64 {
        self.close - self.open
    }

    pub fn contains(&self, t: SimTime) -> bool {
        self.open <= t && t < self.close
    }
}

/// Windows `[k P, k P + c)` for every `k` with `k P` before the horizon.
pub fn generate_windows(period: f64, contact: f64, horizon: f64) -> Result<Vec<ContactWindow>, LinkError> {
    if !(contact > 0.0 && contact < period && period.is_finite()) {
        return Err(LinkError::Geometry { period, contact });
    }
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let open = k as f64 * period;
        if open >= horizon {
            break;
        }
        out.push(ContactWindow {
            open,
            close: open + contact,
        });
        k += 1;
    }
    Ok(out)
}

pub fn duty_cycle(period: f64, contact: f64) -> f64 {
    contact / period
}

/// Checks that windows are non-empty, ascending and disjoint.
pub fn validate_windows(windows: &[ContactWindow]) -> Result<(), LinkError> {
    for (i, w) in windows.iter().enumerate() {
        if !(w.close > w.open) {
            return Err(LinkError::Parse {
                line: i + 1,
                reason: format!("close {} is not after open {}", w.close, w.open),
            });
        }
        if i > 0 && w.open < windows[i - 1].close {
            return Err(LinkError::Overlap { index: i });
        }
    }
    Ok(())
}

/// Parses `open close` pairs, one per line. Blank lines and `#` comments
/// are ignored.
pub fn parse_windows(text: &str) -> Result<Vec<ContactWindow>, LinkError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| LinkError::Parse { line: idx + 1, reason };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(bad(format!("expected two numbers, found {}", fields.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("{s:?} is not a number")))
        };
        let w = ContactWindow {
            open: num(fields[0])?,
            close: num(fields[1])?,
        };
        if !(w.close > w.open) {
            return Err(bad(format!("close {} is not after open {}", w.close, w.open)));
        }
        if let Some(prev) = out.last() {
            let prev: &ContactWindow = prev;
            if w.open < prev.close {
                return Err(LinkError::Overlap { index: out.len() });
            }
        }
        out.push(w);
    }
    Ok(out)
}

pub fn load_windows(path: &Path) -> Result<Vec<ContactWindow>, LinkError> {
    let text = std::fs::read_to_string(path).map_err(|err| LinkError::Io {
        path: path.display().to_string(),
        reason: err.to_string(),
    })?;
    parse_windows(&text)
}

pub fn format_windows(windows: &[ContactWindow]) -> String {
    windows.iter().map(|w| format!("{} {}\n", w.open, w.close)).collect()
}

/// Seconds to move `size_bytes` at `rate_bps`.
pub fn transfer_time(size_bytes: u64, rate_bps: f64) -> f64 {
    8.0 * size_bytes as f64 / rate_bps
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    /// Satellite to ground.
    Up,
    /// Ground to satellite.
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    PriorityQueries,
    Metadata,
    MissingRequest,
    FullRecords,
    SecondaryChunk,
    Ack,
}

impl MessageKind {
    pub const ALL: [MessageKind; 6] = [
        MessageKind::PriorityQueries,
        MessageKind::Metadata,
        MessageKind::MissingRequest,
        MessageKind::FullRecords,
        MessageKind::SecondaryChunk,
        MessageKind::Ack,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::PriorityQueries => "priority_queries",
            MessageKind::Metadata => "metadata",
            MessageKind::MissingRequest => "missing_request",
            MessageKind::FullRecords => "full_records",
            MessageKind::SecondaryChunk => "secondary_chunk",
            MessageKind::Ack => "ack",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            MessageKind::PriorityQueries | MessageKind::MissingRequest | MessageKind::SecondaryChunk => {
                Direction::Up
            }
            MessageKind::Metadata | MessageKind::FullRecords | MessageKind::Ack => Direction::Down,
        }
    }
}

/// Protocol position of the link within a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Disconnected,
    Idle,
    PriorityUp,
    /// Priority queries delivered; ground retrieval still running.
    AwaitPlan,
    MetadataDown,
    MissingRequestUp,
    RecordsDown,
    SecondaryUp(usize),
    AckDown(usize),
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Disconnected => write!(f, "disconnected"),
            Phase::Idle => write!(f, "idle"),
            Phase::PriorityUp => write!(f, "priority_up"),
            Phase::AwaitPlan => write!(f, "await_plan"),
            Phase::MetadataDown => write!(f, "metadata_down"),
            Phase::MissingRequestUp => write!(f, "missing_request_up"),
            Phase::RecordsDown => write!(f, "records_down"),
            Phase::SecondaryUp(i) => write!(f, "secondary_up:{i}"),
            Phase::AckDown(i) => write!(f, "ack_down:{i}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Queries(Vec<Query>),
    Images(Vec<ImageId>),
    Records(Vec<crate::types::ArchiveRecord>),
    Acks(Vec<QueryId>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WireMessage {
    pub kind: MessageKind,
    pub payload: Payload,
    pub size_bytes: u64,
}

impl WireMessage {
    pub fn queries(kind: MessageKind, queries: Vec<Query>) -> Self {
        let size_bytes = HEADER_BYTES + queries.iter().map(|q| q.image_bytes).sum::<u64>();
        Self {
            kind,
            payload: Payload::Queries(queries),
            size_bytes,
        }
    }

    pub fn images(kind: MessageKind, ids: Vec<ImageId>) -> Self {
        let size_bytes = HEADER_BYTES + ID_ENTRY_BYTES * ids.len() as u64;
        Self {
            kind,
            payload: Payload::Images(ids),
            size_bytes,
        }
    }

    pub fn records(records: Vec<crate::types::ArchiveRecord>) -> Self {
        let size_bytes = HEADER_BYTES + records.iter().map(|r| r.record_bytes).sum::<u64>();
        Self {
            kind: MessageKind::FullRecords,
            payload: Payload::Records(records),
            size_bytes,
        }
    }

    pub fn ack(ids: Vec<QueryId>) -> Self {
        let size_bytes = HEADER_BYTES + ID_ENTRY_BYTES * ids.len() as u64;
        Self {
            kind: MessageKind::Ack,
            payload: Payload::Acks(ids),
            size_bytes,
        }
    }

    /// Ids carried, as plain integers.
    pub fn ids(&self) -> Vec<u64> {
        match &self.payload {
            Payload::Queries(qs) => qs.iter().map(|q| q.id.0).collect(),
            Payload::Images(ids) => ids.iter().map(|i| i.0).collect(),
            Payload::Records(rs) => rs.iter().map(|r| r.id().0).collect(),
            Payload::Acks(ids) => ids.iter().map(|i| i.0).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Delivered,
    Dropped,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Delivered => "delivered",
            Outcome::Dropped => "dropped",
        }
    }
}

/// One line of the protocol trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub window: usize,
    pub start: SimTime,
    /// Delivery time, or the window close for dropped messages.
    pub end: SimTime,
    pub direction: Direction,
    pub kind: MessageKind,
    pub size_bytes: u64,
    pub phase: Phase,
    pub outcome: Outcome,
    /// Satellite priority-buffer length when the message started.
    pub priority_len: usize,
    pub ids: Vec<u64>,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.ids.iter().map(|i| i.to_string()).collect();
        write!(
            f,
            "win={} start={:.6} end={:.6} dir={} kind={} size={} phase={} outcome={} pri={} ids={}",
            self.window,
            self.start,
            self.end,
            self.direction.as_str(),
            self.kind.as_str(),
            self.size_bytes,
            self.phase,
            self.outcome.as_str(),
            self.priority_len,
            if ids.is_empty() { "-".to_string() } else { ids.join(",") },
        )
    }
}

impl TraceEntry {
    /// Parses a line written by the `Display` impl.
    pub fn parse(line: &str) -> Result<Self, String> {
        let mut fields = std::collections::BTreeMap::new();
        for part in line.split_whitespace() {
            let (k, v) = part.split_once('=').ok_or_else(|| format!("bad field {part:?}"))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("missing {k}"));
        let num = |k: &str| -> Result<f64, String> { get(k)?.parse().map_err(|_| format!("bad {k}")) };
        let int = |k: &str| -> Result<u64, String> { get(k)?.parse().map_err(|_| format!("bad {k}")) };
        let kind = MessageKind::ALL
            .into_iter()
            .find(|m| m.as_str() == fields.get("kind").copied().unwrap_or(""))
            .ok_or("bad kind")?;
        let direction = match get("dir")? {
            "up" => Direction::Up,
            "down" => Direction::Down,
            other => return Err(format!("bad dir {other}")),
        };
        let outcome = match get("outcome")? {
            "delivered" => Outcome::Delivered,
            "dropped" => Outcome::Dropped,
            other => return Err(format!("bad outcome {other}")),
        };
        let phase = parse_phase(get("phase")?)?;
        let ids = match get("ids")? {
            "-" => Vec::new(),
            list => list
                .split(',')
                .map(|s| s.parse().map_err(|_| format!("bad id {s}")))
                .collect::<Result<_, _>>()?,
        };
        Ok(Self {
            window: int("win")? as usize,
            start: num("start")?,
            end: num("end")?,
            direction,
            kind,
            size_bytes: int("size")?,
            phase,
            outcome,
            priority_len: int("pri")? as usize,
            ids,
        })
    }
}

fn parse_phase(s: &str) -> Result<Phase, String> {
    let indexed = |p: &str| -> Result<usize, String> { p.parse().map_err(|_| format!("bad phase {s}")) };
    Ok(match s {
        "disconnected" => Phase::Disconnected,
        "idle" => Phase::Idle,
        "priority_up" => Phase::PriorityUp,
        "await_plan" => Phase::AwaitPlan,
        "metadata_down" => Phase::MetadataDown,
        "missing_request_up" => Phase::MissingRequestUp,
        "records_down" => Phase::RecordsDown,
        other => {
            if let Some(i) = other.strip_prefix("secondary_up:") {
                Phase::SecondaryUp(indexed(i)?)
            } else if let Some(i) = other.strip_prefix("ack_down:") {
                Phase::AckDown(indexed(i)?)
            } else {
                return Err(format!("bad phase {s}"));
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkParams {
    pub uplink_rate: f64,
    pub downlink_rate: f64,
    pub chunk_size: usize,
    /// One-way delay added to every transfer.
    pub propagation_delay: f64,
}

impl LinkParams {
    pub fn rate(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Up => self.uplink_rate,
            Direction::Down => self.downlink_rate,
        }
    }
}

/// A message on the wire.
#[derive(Clone, Debug, PartialEq)]
pub struct InFlight {
    pub message: WireMessage,
    pub start: SimTime,
    pub done: SimTime,
    pub priority_len: usize,
}

/// What a delivery changed, for the driver to react to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    /// Priority queries reached the ground and await retrieval.
    PriorityReceived,
    /// A secondary chunk reached the ground.
    SecondaryReceived,
    Other,
}

/// Half-duplex protocol state machine. One message is in flight at a time;
/// the driver calls [`LinkSession::start_next`] whenever the link is free
/// and [`LinkSession::finish`] when the message's transfer completes.
#[derive(Clone, Debug)]
pub struct LinkSession {
    params: LinkParams,
    phase: Phase,
    window: Option<(usize, ContactWindow)>,
    in_flight: Option<InFlight>,
    /// Query ids of the priority round in progress.
    round: Vec<QueryId>,
    chunk_index: usize,
    trace: Vec<TraceEntry>,
    bytes_up: u64,
    bytes_down: u64,
}

impl LinkSession {
    pub fn new(params: LinkParams) -> Self {
        Self {
            params,
            phase: Phase::Disconnected,
            window: None,
            in_flight: None,
            round: Vec::new(),
            chunk_index: 0,
            trace: Vec::new(),
            bytes_up: 0,
            bytes_down: 0,
        }
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn in_flight(&self) -> Option<&InFlight> {
        self.in_flight.as_ref()
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceEntry> {
        std::mem::take(&mut self.trace)
    }

    /// Delivered bytes per direction.
    pub fn delivered_bytes(&self) -> (u64, u64) {
        (self.bytes_up, self.bytes_down)
    }

    pub fn is_open(&self) -> bool {
        self.window.is_some()
    }

    pub fn open(&mut self, index: usize, window: ContactWindow) {
        self.window = Some((index, window));
        self.phase = Phase::Idle;
        self.in_flight = None;
        self.round.clear();
        self.chunk_index = 0;
    }

    /// Ends the window, dropping any message still in flight.
    pub fn close(&mut self) {
        if let (Some(f), Some((index, w))) = (self.in_flight.take(), self.window) {
            self.trace.push(TraceEntry {
                window: index,
                start: f.start,
                end: w.close,
                direction: f.message.kind.direction(),
                kind: f.message.kind,
                size_bytes: f.message.size_bytes,
                phase: self.phase,
                outcome: Outcome::Dropped,
                priority_len: f.priority_len,
                ids: f.message.ids(),
            });
        }
        self.window = None;
        self.phase = Phase::Disconnected;
        self.round.clear();
    }

    /// Picks and starts the next message, if the protocol has one to send.
    /// The message may finish after the window closes; the driver drops it
    /// at close in that case.
    pub fn start_next(&mut self, now: SimTime, sat: &Satellite, ground: &mut Ground) -> Option<&InFlight> {
        if self.window.is_none() || self.in_flight.is_some() {
            return None;
        }
        let message = match self.phase {
            Phase::Idle => {
                if sat.buffer().priority_len() > 0 {
                    let queries: Vec<Query> = sat.buffer().priority().cloned().collect();
                    self.round = queries.iter().map(|q| q.id).collect();
                    self.phase = Phase::PriorityUp;
                    WireMessage::queries(MessageKind::PriorityQueries, queries)
                } else if sat.buffer().secondary_len() > 0 {
                    let chunk = sat.buffer().secondary_head(self.params.chunk_size);
                    self.phase = Phase::SecondaryUp(self.chunk_index);
                    WireMessage::queries(MessageKind::SecondaryChunk, chunk)
                } else {
                    return None;
                }
            }
            Phase::AwaitPlan => {
                if ground.priority_pending() > 0 {
                    return None;
                }
                self.phase = Phase::MetadataDown;
                WireMessage::images(MessageKind::Metadata, ground.advertise())
            }
            _ => return None,
        };
        self.launch(now, sat, message)
    }

    fn launch(&mut self, now: SimTime, sat: &Satellite, message: WireMessage) -> Option<&InFlight> {
        let rate = self.params.rate(message.kind.direction());
        let done = now + transfer_time(message.size_bytes, rate) + self.params.propagation_delay;
        self.in_flight = Some(InFlight {
            message,
            start: now,
            done,
            priority_len: sat.buffer().priority_len(),
        });
        self.in_flight.as_ref()
    }

    /// Delivers the in-flight message and queues any direct reply.
    pub fn finish(
        &mut self,
        now: SimTime,
        sat: &mut Satellite,
        ground: &mut Ground,
    ) -> Result<Delivery, LinkError> {
        let Some(f) = self.in_flight.take() else {
            return Ok(Delivery::Other);
        };
        let (index, _) = self.window.expect("in-flight message outside a window");
        match f.message.kind.direction() {
            Direction::Up => self.bytes_up += f.message.size_bytes,
            Direction::Down => self.bytes_down += f.message.size_bytes,
        }
        self.trace.push(TraceEntry {
            window: index,
            start: f.start,
            end: now,
            direction: f.message.kind.direction(),
            kind: f.message.kind,
            size_bytes: f.message.size_bytes,
            phase: self.phase,
            outcome: Outcome::Delivered,
            priority_len: f.priority_len,
            ids: f.message.ids(),
        });
        let mut delivery = Delivery::Other;
        match f.message.payload {
            Payload::Queries(queries) if f.message.kind == MessageKind::PriorityQueries => {
                ground.begin_round();
                for q in queries {
                    ground.receive_priority(q);
                }
                self.phase = Phase::AwaitPlan;
                delivery = Delivery::PriorityReceived;
            }
            Payload::Queries(queries) => {
                ground.handle_secondary_chunk(&queries);
                let ids = queries.iter().map(|q| q.id).collect();
                self.phase = Phase::AckDown(self.chunk_index);
                self.launch(now, sat, WireMessage::ack(ids));
                delivery = Delivery::SecondaryReceived;
            }
            Payload::Images(ids) if f.message.kind == MessageKind::Metadata => {
                let round = std::mem::take(&mut self.round);
                sat.buffer_mut().remove(&round);
                sat.refresh_resident(&ids)?;
                let missing = sat.missing_from(&ids);
                self.phase = Phase::MissingRequestUp;
                self.launch(now, sat, WireMessage::images(MessageKind::MissingRequest, missing));
            }
            Payload::Images(ids) => {
                let records = ground.resolve_missing(&ids)?;
                self.phase = Phase::RecordsDown;
                self.launch(now, sat, WireMessage::records(records));
            }
            Payload::Records(records) => {
                sat.apply_archive_update(&records)?;
                self.phase = Phase::Idle;
            }
            Payload::Acks(ids) => {
                sat.buffer_mut().remove(&ids);
                self.chunk_index += 1;
                self.phase = Phase::Idle;
            }
        }
        Ok(delivery)
    }
}

/// Runs the protocol over one window with the nodes otherwise frozen: no
/// captures arrive and ground retrieval is instantaneous. Returns the
/// window's trace.
pub fn run_window(
    index: usize,
    window: ContactWindow,
    session: &mut LinkSession,
    sat: &mut Satellite,
    ground: &mut Ground,
) -> Result<Vec<TraceEntry>, LinkError> {
    let before = session.trace().len();
    session.open(index, window);
    let mut now = window.open;
    loop {
        if session.in_flight().is_none() {
            if session.phase() == Phase::AwaitPlan {
                while let Some(job) = ground.next_retrieval() {
                    ground.complete_retrieval(job)?;
                }
            }
            if session.start_next(now, sat, ground).is_none() {
                break;
            }
        }
        let done = session.in_flight().expect("message in flight").done;
        if done >= window.close {
            break;
        }
        now = done;
        session.finish(now, sat, ground)?;
    }
    session.close();
    Ok(session.trace()[before..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orbit_geometry() {
        let w = generate_windows(5700.0, 300.0, 11400.0).unwrap();
        assert_eq!(
            w,
            vec![
                ContactWindow { open: 0.0, close: 300.0 },
                ContactWindow { open: 5700.0, close: 6000.0 },
            ]
        );
        assert!((duty_cycle(5700.0, 300.0) - 0.0526).abs() < 1e-4);
        assert!(generate_windows(300.0, 300.0, 1000.0).is_err());
        assert!(generate_windows(95.0, 5.0, 0.0).unwrap().is_empty());
    }

    #[test]
    fn transfer_times() {
        assert_eq!(transfer_time(3_750_000, 30e6), 1.0);
        assert_eq!(transfer_time(0, 30e6), 0.0);
        let scene = transfer_time(5_000_000_000, 1200e6);
        assert!((scene - 33.333).abs() < 1e-3);
        assert_eq!(transfer_time(1000, 2e6) * 2.0, transfer_time(1000, 1e6));
    }

    #[test]
    fn schedule_files() {
        let w = parse_windows("# open close\n0 5\n95 100\n").unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(parse_windows("").unwrap(), vec![]);
        assert_eq!(parse_windows("0 10\n5 20\n"), Err(LinkError::Overlap { index: 1 }));
        assert!(matches!(parse_windows("0 x"), Err(LinkError::Parse { line: 1, .. })));
        assert!(matches!(parse_windows("5 5"), Err(LinkError::Parse { .. })));
        assert_eq!(parse_windows(&format_windows(&w)).unwrap(), w);
    }

    #[test]
    fn message_sizes_include_header() {
        let m = WireMessage::images(MessageKind::Metadata, vec![ImageId(1), ImageId(2)]);
        assert_eq!(m.size_bytes, 64 + 32);
        assert_eq!(WireMessage::ack(vec![]).size_bytes, 64);
        assert_eq!(WireMessage::records(vec![]).size_bytes, 64);
    }

    #[test]
    fn trace_lines_round_trip() {
        let e = TraceEntry {
            window: 3,
            start: 1.5,
            end: 2.25,
            direction: Direction::Up,
            kind: MessageKind::SecondaryChunk,
            size_bytes: 4096,
            phase: Phase::SecondaryUp(2),
            outcome: Outcome::Dropped,
            priority_len: 0,
            ids: vec![4, 5],
        };
        assert_eq!(TraceEntry::parse(&e.to_string()).unwrap(), e);
        let empty = TraceEntry { ids: vec![], phase: Phase::MetadataDown, ..e };
        assert_eq!(TraceEntry::parse(&empty.to_string()).unwrap(), empty);
    }
}
