//! The satellite node: onboard retrieval, the two-stage dispatcher, the
//! LRU-managed archive and the transmission buffer.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::archive::{Archive, ArchiveError, RetrievedRecord};
use crate::config::SystemConfig;
use crate::inference::{confidence, InferenceBackend, InferenceError};
use crate::types::{AnswerText, ArchiveRecord, ImageId, Query, QueryId};

#[derive(Debug, Error, PartialEq)]
pub enum SatelliteError {
    #[error("query {0} is already buffered")]
    DuplicateQuery(QueryId),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TransmitReason {
    InsufficientContext,
    LowConfidence,
    EmptyArchive,
}

impl TransmitReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TransmitReason::InsufficientContext => "insufficient_context",
            TransmitReason::LowConfidence => "low_confidence",
            TransmitReason::EmptyArchive => "empty_archive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DispatchDecision {
    Accept { answer: AnswerText, confidence: f64 },
    Transmit(TransmitReason),
}

impl DispatchDecision {
    pub fn is_accept(&self) -> bool {
        matches!(self, DispatchDecision::Accept { .. })
    }
}

/// Result of the matching test.
#[derive(Clone, Debug, PartialEq)]
pub enum MatchOutcome {
    Pass(Vec<RetrievedRecord>),
    /// Fewer than `T_K` records survived.
    Reject { survivors: usize },
}

/// Keeps records whose image similarity reaches `T_M` and whose instruction
/// similarity reaches `T_I`; rejects when fewer than `T_K` remain.
pub fn matching_test(candidates: &[RetrievedRecord], cfg: &SystemConfig) -> MatchOutcome {
    let kept: Vec<RetrievedRecord> = candidates
        .iter()
        .filter(|r| r.image_similarity >= cfg.t_m && r.instruction_similarity >= cfg.t_i)
        .cloned()
        .collect();
    if kept.len() < cfg.t_k {
        MatchOutcome::Reject {
            survivors: kept.len(),
        }
    } else {
        MatchOutcome::Pass(kept)
    }
}

/// Two-tier buffer of queries waiting for the downlink to the ground.
///
/// `priority` holds the newest queries, newest last, at most `n_mp` of them.
/// `secondary` holds everything older, oldest first. Entries stay buffered
/// until the ground confirms receipt.
#[derive(Clone, Debug)]
pub struct TransmissionBuffer {
    n_mp: usize,
    priority_enabled: bool,
    priority: VecDeque<Query>,
    secondary: Vec<Query>,
    ids: BTreeSet<QueryId>,
}

impl TransmissionBuffer {
    pub fn new(n_mp: usize, priority_enabled: bool) -> Self {
        Self {
            n_mp,
            priority_enabled,
            priority: VecDeque::new(),
            secondary: Vec::new(),
            ids: BTreeSet::new(),
        }
    }

    pub fn cache(&mut self, q: Query) -> Result<(), SatelliteError> {
        if !self.ids.insert(q.id) {
            return Err(SatelliteError::DuplicateQuery(q.id));
        }
        if !self.priority_enabled {
            self.push_secondary(q);
            return Ok(());
        }
        self.priority.push_back(q);
        while self.priority.len() > self.n_mp {
            let oldest = self.priority.pop_front().expect("non-empty");
            self.push_secondary(oldest);
        }
        Ok(())
    }

    fn push_secondary(&mut self, q: Query) {
        let at = self.secondary.partition_point(|x| x.id < q.id);
        self.secondary.insert(at, q);
    }

    pub fn priority(&self) -> impl ExactSizeIterator<Item = &Query> {
        self.priority.iter()
    }

    pub fn secondary(&self) -> &[Query] {
        &self.secondary
    }

    pub fn priority_len(&self) -> usize {
        self.priority.len()
    }

    pub fn secondary_len(&self) -> usize {
        self.secondary.len()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: QueryId) -> bool {
        self.ids.contains(&id)
    }

    /// The oldest `n` secondary queries.
    pub fn secondary_head(&self, n: usize) -> Vec<Query> {
        self.secondary.iter().take(n).cloned().collect()
    }

    /// Drops delivered queries from whichever list holds them.
    pub fn remove(&mut self, delivered: &[QueryId]) {
        let gone: BTreeSet<QueryId> = delivered.iter().copied().collect();
        self.priority.retain(|q| !gone.contains(&q.id));
        self.secondary.retain(|q| !gone.contains(&q.id));
        for id in &gone {
            self.ids.remove(id);
        }
    }
}

/// Outcome of retrieval plus the matching test, before inference.
#[derive(Clone, Debug, PartialEq)]
pub enum Assessment {
    Rejected {
        reason: TransmitReason,
        retrieved: Vec<RetrievedRecord>,
    },
    Ready {
        retrieved: Vec<RetrievedRecord>,
        survivors: Vec<RetrievedRecord>,
    },
}

/// Per-query dispatcher log entry.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord {
    pub query: QueryId,
    pub retrieved: usize,
    pub survivors: usize,
    pub best_image_similarity: Option<f64>,
    pub best_instruction_similarity: Option<f64>,
    pub confidence: Option<f64>,
    pub decision: DispatchDecision,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LruOp {
    Touch(Vec<ImageId>),
    Update {
        incoming: Vec<ImageId>,
        evicted: Vec<ImageId>,
    },
}

/// An LRU operation together with the resulting queue, front first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LruEvent {
    pub op: LruOp,
    pub order_after: Vec<ImageId>,
}

pub struct Satellite {
    cfg: SystemConfig,
    archive: Archive,
    buffer: TransmissionBuffer,
    backend: Arc<dyn InferenceBackend>,
    lru_log: Vec<LruEvent>,
}

impl std::fmt::Debug for Satellite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Satellite")
            .field("archive", &self.archive)
            .field("buffer", &self.buffer)
            .finish()
    }
}

impl Satellite {
    pub fn new(
        cfg: SystemConfig,
        archive: Archive,
        backend: Arc<dyn InferenceBackend>,
        priority_enabled: bool,
    ) -> Self {
        let buffer = TransmissionBuffer::new(cfg.n_mp, priority_enabled);
        Self {
            cfg,
            archive,
            buffer,
            backend,
            lru_log: Vec::new(),
        }
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn buffer(&self) -> &TransmissionBuffer {
        &self.buffer
    }

    pub fn buffer_mut(&mut self) -> &mut TransmissionBuffer {
        &mut self.buffer
    }

    pub fn lru_log(&self) -> &[LruEvent] {
        &self.lru_log
    }

    /// Retrieval and the matching test.
    pub fn assess(&self, q: &Query) -> Result<Assessment, SatelliteError> {
        let retrieved = match self.archive.retrieve(q, self.cfg.k) {
            Ok(r) => r,
            Err(ArchiveError::EmptyArchive) => {
                return Ok(Assessment::Rejected {
                    reason: TransmitReason::EmptyArchive,
                    retrieved: Vec::new(),
                })
            }
            Err(err) => return Err(err.into()),
        };
        Ok(match matching_test(&retrieved, &self.cfg) {
            MatchOutcome::Pass(survivors) => Assessment::Ready {
                retrieved,
                survivors,
            },
            MatchOutcome::Reject { .. } => Assessment::Rejected {
                reason: TransmitReason::InsufficientContext,
                retrieved,
            },
        })
    }

    /// Inference and the cognitive test for a query that passed
    /// [`Satellite::assess`], or the transmit path for one that did not.
    /// Transmitted queries are cached; accepted ones touch the LRU entries of
    /// every retrieved image still resident, best rank first.
    pub fn complete(&mut self, q: &Query, assessment: Assessment) -> Result<DecisionRecord, SatelliteError> {
        let (retrieved, survivors) = match &assessment {
            Assessment::Rejected { retrieved, .. } => (retrieved.as_slice(), &[][..]),
            Assessment::Ready { retrieved, survivors } => (retrieved.as_slice(), survivors.as_slice()),
        };
        let mut record = DecisionRecord {
            query: q.id,
            retrieved: retrieved.len(),
            survivors: survivors.len(),
            best_image_similarity: retrieved.first().map(|r| r.image_similarity),
            best_instruction_similarity: retrieved.first().map(|r| r.instruction_similarity),
            confidence: None,
            decision: DispatchDecision::Transmit(TransmitReason::EmptyArchive),
        };
        match &assessment {
            Assessment::Rejected { reason, .. } => {
                self.buffer.cache(q.clone())?;
                record.decision = DispatchDecision::Transmit(*reason);
            }
            Assessment::Ready { .. } => {
                let out = self.backend.generate(q, survivors)?;
                let conf = confidence(&out)?;
                record.confidence = Some(conf);
                if conf < self.cfg.t_conf {
                    self.buffer.cache(q.clone())?;
                    record.decision = DispatchDecision::Transmit(TransmitReason::LowConfidence);
                } else {
                    let ids: Vec<ImageId> = retrieved
                        .iter()
                        .map(|r| r.image.image_id)
                        .filter(|id| self.archive.contains(*id))
                        .collect();
                    self.touch(ids)?;
                    record.decision = DispatchDecision::Accept {
                        answer: out.answer,
                        confidence: conf,
                    };
                }
            }
        }
        Ok(record)
    }

    /// Runs the whole dispatcher on one query.
    pub fn process_query(&mut self, q: &Query) -> Result<DecisionRecord, SatelliteError> {
        let assessment = self.assess(q)?;
        self.complete(q, assessment)
    }

    pub fn cache_for_transmission(&mut self, q: Query) -> Result<(), SatelliteError> {
        self.buffer.cache(q)
    }

    fn touch(&mut self, ids: Vec<ImageId>) -> Result<(), SatelliteError> {
        if ids.is_empty() {
            return Ok(());
        }
        self.archive.touch(&ids)?;
        self.log_lru(LruOp::Touch(ids));
        Ok(())
    }

    fn log_lru(&mut self, op: LruOp) {
        let order_after = self.archive.lru().map(|l| l.to_vec()).unwrap_or_default();
        self.lru_log.push(LruEvent { op, order_after });
    }

    /// Advertised ids the satellite does not hold, in advertised order.
    pub fn missing_from(&self, advertised: &[ImageId]) -> Vec<ImageId> {
        advertised
            .iter()
            .copied()
            .filter(|id| !self.archive.contains(*id))
            .collect()
    }

    /// Inserts records received from the ground. When the update holds more
    /// distinct images than the cap, only the last `cap` are kept.
    pub fn apply_archive_update(&mut self, records: &[ArchiveRecord]) -> Result<Vec<ImageId>, SatelliteError> {
        let cap = self.cfg.sat_archive_cap;
        let mut merged = crate::archive::merge_by_image(records);
        if merged.len() > cap {
            merged.drain(..merged.len() - cap);
        }
        if merged.is_empty() {
            return Ok(Vec::new());
        }
        let evicted = self.archive.evict_and_insert(&merged, cap)?;
        let incoming = merged.iter().map(|r| r.id()).collect();
        self.log_lru(LruOp::Update {
            incoming,
            evicted: evicted.clone(),
        });
        Ok(evicted)
    }

    /// Refreshes the LRU position of advertised images already on board.
    pub fn refresh_resident(&mut self, advertised: &[ImageId]) -> Result<(), SatelliteError> {
        let resident: Vec<ImageId> = advertised
            .iter()
            .copied()
            .filter(|id| self.archive.contains(*id))
            .collect();
        if resident.is_empty() {
            return Ok(());
        }
        self.archive.touch(&resident)?;
        self.log_lru(LruOp::Update {
            incoming: resident,
            evicted: Vec::new(),
        });
        Ok(())
    }
}
