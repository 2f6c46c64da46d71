//! The discrete-event engine that drives both nodes and the link.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::archive::Archive;
use crate::embedding::{EmbeddingProvider, SyntheticEmbedder};
use crate::ground::{Ground, GroundAnswer, GroundError, RetrievalJob, RetrievalLog};
use crate::inference::Role;
use crate::link::{ContactWindow, Delivery, LinkError, LinkParams, LinkSession, TraceEntry};
use crate::satellite::{Assessment, DecisionRecord, DispatchDecision, LruEvent, Satellite, SatelliteError};
use crate::sim::metrics::{BacklogSample, Disposition, QueryRecord, RunSummary};
use crate::sim::scenario::{Scenario, ScenarioError};
use crate::types::{ImageId, Query, QueryId, SimTime};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Satellite(#[from] SatelliteError),
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("invariant violated at t={time}: {what}")]
    Invariant { time: SimTime, what: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    Capture(u64),
    OnboardInferenceDone,
    WindowOpen(usize),
    WindowClose(usize),
    /// Completion of the link transfer with this generation number.
    TransferDone(u64),
    GroundRetrievalDone,
    GroundInferenceDone,
}

#[derive(Clone, Debug)]
struct Event {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    /// Answered queries, by id.
    pub records: Vec<QueryRecord>,
    pub unanswered: Vec<QueryId>,
    pub captures: Vec<Query>,
    pub windows: Vec<ContactWindow>,
    pub trace: Vec<TraceEntry>,
    pub decisions: Vec<DecisionRecord>,
    /// Satellite LRU order before the first event, front first.
    pub lru_initial: Vec<ImageId>,
    pub lru_log: Vec<LruEvent>,
    pub retrieval_log: Vec<RetrievalLog>,
    pub events_processed: u64,
}

struct Engine {
    scenario: Scenario,
    queue: BinaryHeap<Event>,
    seq: u64,
    sat: Satellite,
    ground: Ground,
    link: LinkSession,
    windows: Vec<ContactWindow>,
    onboard_queue: VecDeque<Query>,
    onboard_busy: Option<(Query, Assessment)>,
    retrieval_busy: Option<RetrievalJob>,
    inference_busy: Option<GroundAnswer>,
    link_gen: u64,
    link_scheduled: bool,
    captures: Vec<Query>,
    decisions: BTreeMap<QueryId, DecisionRecord>,
    answers: BTreeMap<QueryId, QueryRecord>,
    backlog: Vec<BacklogSample>,
    max_archive: usize,
    lru_initial: Vec<ImageId>,
    events: u64,
}

/// Runs a scenario to the end of its drain period.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    scenario.validate()?;
    let mut engine = Engine::new(scenario.clone())?;
    engine.run()?;
    Ok(engine.finish())
}

impl Engine {
    fn new(scenario: Scenario) -> Result<Self, SimError> {
        let cfg = scenario.config.clone();
        let provider: Arc<dyn EmbeddingProvider> = Arc::new(SyntheticEmbedder::new(scenario.embedding.clone()));
        let answers = scenario.answer_space();

        let mut ground_archive = Archive::new(provider.clone());
        for r in &scenario.corpus {
            ground_archive.insert(r).map_err(GroundError::from)?;
        }
        let ground_backend = scenario.ground_backend.build(Role::Ground, cfg.rng_seed, &answers);
        let ground = Ground::new(cfg.k, ground_archive, ground_backend);

        let mut sat_archive = Archive::with_lru(provider, cfg.sat_archive_cap);
        for r in scenario.initial_satellite_records() {
            sat_archive.insert(&r).map_err(SatelliteError::from)?;
        }
        let sat_backend = scenario.satellite_backend.build(Role::Satellite, cfg.rng_seed, &answers);
        let sat = Satellite::new(cfg.clone(), sat_archive, sat_backend, scenario.priority_enabled);

        let link = LinkSession::new(LinkParams {
            uplink_rate: cfg.uplink_rate,
            downlink_rate: cfg.downlink_rate,
            chunk_size: cfg.secondary_chunk_size,
            propagation_delay: scenario.timing.propagation_delay,
        });
        let windows = scenario.contact_windows()?;
        let max_archive = sat.archive().len();
        let lru_initial = sat.archive().lru().map(|l| l.to_vec()).unwrap_or_default();
        Ok(Self {
            scenario,
            queue: BinaryHeap::new(),
            seq: 0,
            sat,
            ground,
            link,
            windows,
            onboard_queue: VecDeque::new(),
            onboard_busy: None,
            retrieval_busy: None,
            inference_busy: None,
            link_gen: 0,
            link_scheduled: false,
            captures: Vec::new(),
            decisions: BTreeMap::new(),
            answers: BTreeMap::new(),
            backlog: Vec::new(),
            max_archive,
            lru_initial,
            events: 0,
        })
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind) {
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    fn run(&mut self) -> Result<(), SimError> {
        // Window events go in first so they win ties against later events.
        for i in 0..self.windows.len() {
            let w = self.windows[i];
            self.schedule(w.open, EventKind::WindowOpen(i));
            self.schedule(w.close, EventKind::WindowClose(i));
        }
        if self.scenario.horizon > 0.0 {
            self.schedule(0.0, EventKind::Capture(0));
        }
        let end = self.scenario.horizon + self.scenario.drain;
        while let Some(ev) = self.queue.pop() {
            if ev.time > end {
                break;
            }
            self.events += 1;
            self.handle(ev.time, ev.kind)?;
            self.check(ev.time)?;
        }
        Ok(())
    }

    fn handle(&mut self, now: SimTime, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::Capture(i) => {
                let q = self.scenario.workload.query(self.scenario.config.rng_seed, i, now);
                self.captures.push(q.clone());
                self.onboard_queue.push_back(q);
                let next = (i + 1) as f64 * self.scenario.config.capture_interval;
                if next < self.scenario.horizon {
                    self.schedule(next, EventKind::Capture(i + 1));
                }
                self.pump_onboard(now)?;
            }
            EventKind::OnboardInferenceDone => {
                let (q, assessment) = self.onboard_busy.take().expect("onboard server busy");
                self.complete_onboard(now, &q, assessment)?;
                self.pump_onboard(now)?;
            }
            EventKind::WindowOpen(i) => {
                self.backlog.push(BacklogSample {
                    time: now,
                    outstanding: self.captures.len() - self.answers.len(),
                    buffered: self.sat.buffer().len(),
                });
                self.link.open(i, self.windows[i]);
                self.pump_link(now)?;
            }
            EventKind::WindowClose(_) => {
                self.link.close();
                self.link_gen += 1;
                self.link_scheduled = false;
            }
            EventKind::TransferDone(gen) => {
                if gen != self.link_gen || !self.link_scheduled {
                    return Ok(());
                }
                self.link_gen += 1;
                self.link_scheduled = false;
                let delivery = self.link.finish(now, &mut self.sat, &mut self.ground)?;
                if matches!(delivery, Delivery::PriorityReceived | Delivery::SecondaryReceived) {
                    self.pump_retrieval(now)?;
                }
                self.pump_link(now)?;
            }
            EventKind::GroundRetrievalDone => {
                let job = self.retrieval_busy.take().expect("retrieval busy");
                self.ground.complete_retrieval(job)?;
                self.pump_inference(now)?;
                self.pump_retrieval(now)?;
                self.pump_link(now)?;
            }
            EventKind::GroundInferenceDone => {
                let ans = self.inference_busy.take().expect("inference busy");
                self.record_ground(now, ans)?;
                self.pump_inference(now)?;
            }
        }
        Ok(())
    }

    fn pump_onboard(&mut self, now: SimTime) -> Result<(), SimError> {
        while self.onboard_busy.is_none() {
            let Some(q) = self.onboard_queue.pop_front() else {
                break;
            };
            let assessment = self.sat.assess(&q)?;
            match assessment {
                Assessment::Rejected { .. } => self.complete_onboard(now, &q, assessment)?,
                Assessment::Ready { .. } => {
                    self.onboard_busy = Some((q, assessment));
                    self.schedule(now + self.scenario.timing.onboard_inference, EventKind::OnboardInferenceDone);
                }
            }
        }
        Ok(())
    }

    fn complete_onboard(&mut self, now: SimTime, q: &Query, assessment: Assessment) -> Result<(), SimError> {
        let decision = self.sat.complete(q, assessment)?;
        if let DispatchDecision::Accept { answer, confidence } = &decision.decision {
            let record = QueryRecord {
                id: q.id,
                capture_time: q.capture_time,
                label: q.image.scene_label.clone(),
                disposition: Disposition::Onboard,
                answer_time: now,
                latency: now - q.capture_time,
                correct: *answer == q.truth,
                answer: answer.clone(),
                transmit_reason: None,
                survivors: decision.survivors,
                confidence: Some(*confidence),
                ground_class: None,
            };
            self.answer(now, record)?;
        }
        self.decisions.insert(q.id, decision);
        self.max_archive = self.max_archive.max(self.sat.archive().len());
        self.pump_link(now)
    }

    fn record_ground(&mut self, now: SimTime, ans: GroundAnswer) -> Result<(), SimError> {
        let q = &ans.query;
        let decision = self.decisions.get(&q.id).ok_or_else(|| SimError::Invariant {
            time: now,
            what: format!("ground answered query {} the satellite never dispatched", q.id),
        })?;
        let DispatchDecision::Transmit(reason) = decision.decision else {
            return Err(SimError::Invariant {
                time: now,
                what: format!("query {} was accepted onboard and answered on the ground", q.id),
            });
        };
        if ans.context_len != self.scenario.config.k {
            return Err(SimError::Invariant {
                time: now,
                what: format!("ground answer for {} used {} records", q.id, ans.context_len),
            });
        }
        let record = QueryRecord {
            id: q.id,
            capture_time: q.capture_time,
            label: q.image.scene_label.clone(),
            disposition: Disposition::Ground,
            answer_time: now,
            latency: now - q.capture_time,
            correct: ans.answer == q.truth,
            answer: ans.answer.clone(),
            transmit_reason: Some(reason),
            survivors: decision.survivors,
            confidence: decision.confidence,
            ground_class: Some(ans.class),
        };
        self.answer(now, record)
    }

    fn answer(&mut self, now: SimTime, record: QueryRecord) -> Result<(), SimError> {
        if self.answers.contains_key(&record.id) {
            return Err(SimError::Invariant {
                time: now,
                what: format!("query {} answered twice", record.id),
            });
        }
        self.answers.insert(record.id, record);
        Ok(())
    }

    fn pump_link(&mut self, now: SimTime) -> Result<(), SimError> {
        if !self.link_scheduled && self.link.in_flight().is_none() {
            self.link.start_next(now, &self.sat, &mut self.ground);
        }
        if !self.link_scheduled {
            if let Some(f) = self.link.in_flight() {
                let done = f.done;
                self.link_scheduled = true;
                self.schedule(done, EventKind::TransferDone(self.link_gen));
            }
        }
        Ok(())
    }

    fn pump_retrieval(&mut self, now: SimTime) -> Result<(), SimError> {
        if self.retrieval_busy.is_none() {
            if let Some(job) = self.ground.next_retrieval() {
                self.retrieval_busy = Some(job);
                self.schedule(now + self.scenario.timing.ground_retrieval, EventKind::GroundRetrievalDone);
            }
        }
        Ok(())
    }

    fn pump_inference(&mut self, now: SimTime) -> Result<(), SimError> {
        if self.inference_busy.is_none() {
            if let Some(ans) = self.ground.ground_inference_step()? {
                self.inference_busy = Some(ans);
                self.schedule(now + self.scenario.timing.ground_inference, EventKind::GroundInferenceDone);
            }
        }
        Ok(())
    }

    fn check(&mut self, now: SimTime) -> Result<(), SimError> {
        let len = self.sat.archive().len();
        self.max_archive = self.max_archive.max(len);
        if len > self.scenario.config.sat_archive_cap {
            return Err(SimError::Invariant {
                time: now,
                what: format!("satellite archive holds {len} images"),
            });
        }
        if self.sat.buffer().priority_len() > self.scenario.config.n_mp {
            return Err(SimError::Invariant {
                time: now,
                what: "priority buffer exceeds N_mp".into(),
            });
        }
        Ok(())
    }

    fn finish(self) -> RunOutput {
        let records: Vec<QueryRecord> = self.answers.into_values().collect();
        let answered: std::collections::BTreeSet<QueryId> = records.iter().map(|r| r.id).collect();
        let unanswered = self
            .captures
            .iter()
            .map(|q| q.id)
            .filter(|id| !answered.contains(id))
            .collect();
        let mut summary = RunSummary::from_records(&records, self.captures.len());
        let (up, down) = self.link.delivered_bytes();
        summary.uplink_bytes = up;
        summary.downlink_bytes = down;
        summary.max_satellite_archive = self.max_archive;
        summary.backlog = self.backlog;
        RunOutput {
            summary,
            records,
            unanswered,
            captures: self.captures,
            windows: self.windows,
            trace: self.link.trace().to_vec(),
            decisions: self.decisions.into_values().collect(),
            lru_initial: self.lru_initial,
            lru_log: self.sat.lru_log().to_vec(),
            retrieval_log: self.ground.retrieval_log().to_vec(),
            events_processed: self.events,
        }
    }
}
