//! The ground station: full archive, priority-first retrieval, the
//! inference task queue and archive-update planning.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::archive::{Archive, ArchiveError, RetrievedRecord};
use crate::inference::{InferenceBackend, InferenceError};
use crate::types::{AnswerText, ArchiveRecord, ImageId, Query, QueryId};

#[derive(Debug, Error, PartialEq)]
pub enum GroundError {
    #[error("image {0} was never advertised")]
    UnknownId(ImageId),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TaskClass {
    Priority,
    Secondary,
}

impl TaskClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskClass::Priority => "priority",
            TaskClass::Secondary => "secondary",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTask {
    pub query: Query,
    pub context: Vec<RetrievedRecord>,
    pub class: TaskClass,
}

/// Tasks awaiting inference. Priority tasks always leave first; each class
/// is FIFO.
#[derive(Clone, Debug, Default)]
pub struct GroundTaskQueue {
    priority: VecDeque<GroundTask>,
    secondary: VecDeque<GroundTask>,
}

impl GroundTaskQueue {
    pub fn push(&mut self, task: GroundTask) {
        match task.class {
            TaskClass::Priority => self.priority.push_back(task),
            TaskClass::Secondary => self.secondary.push_back(task),
        }
    }

    pub fn pop(&mut self) -> Option<GroundTask> {
        self.priority.pop_front().or_else(|| self.secondary.pop_front())
    }

    pub fn len(&self) -> usize {
        self.priority.len() + self.secondary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Archive update being assembled for the current priority round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdatePlan {
    /// Image ids referenced by the round's retrievals, first-seen order.
    pub metadata: Vec<ImageId>,
    /// Records the satellite reported missing.
    pub pending_full_records: Vec<ArchiveRecord>,
}

impl UpdatePlan {
    pub fn add(&mut self, ids: impl IntoIterator<Item = ImageId>) {
        for id in ids {
            if !self.metadata.contains(&id) {
                self.metadata.push(id);
            }
        }
    }
}

/// A query waiting for ground retrieval.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalJob {
    pub query: Query,
    pub class: TaskClass,
    /// Retrieval only feeds the update plan; the query was already queued.
    pub plan_only: bool,
}

/// One ground retrieval, logged for auditing.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalLog {
    pub query: QueryId,
    pub class: TaskClass,
    /// Priority retrievals still waiting when this one started.
    pub priority_waiting: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundAnswer {
    pub query: Query,
    pub answer: AnswerText,
    pub class: TaskClass,
    pub context_len: usize,
}

pub struct Ground {
    k: usize,
    archive: Archive,
    backend: Arc<dyn InferenceBackend>,
    received: BTreeSet<QueryId>,
    priority_waiting: VecDeque<RetrievalJob>,
    secondary_parked: VecDeque<RetrievalJob>,
    tasks: GroundTaskQueue,
    plan: UpdatePlan,
    advertised: BTreeSet<ImageId>,
    active: Option<TaskClass>,
    retrieval_log: Vec<RetrievalLog>,
}

impl std::fmt::Debug for Ground {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ground")
            .field("archive", &self.archive)
            .field("received", &self.received.len())
            .field("tasks", &self.tasks.len())
            .finish()
    }
}

impl Ground {
    pub fn new(k: usize, archive: Archive, backend: Arc<dyn InferenceBackend>) -> Self {
        Self {
            k,
            archive,
            backend,
            received: BTreeSet::new(),
            priority_waiting: VecDeque::new(),
            secondary_parked: VecDeque::new(),
            tasks: GroundTaskQueue::default(),
            plan: UpdatePlan::default(),
            advertised: BTreeSet::new(),
            active: None,
            retrieval_log: Vec::new(),
        }
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn plan(&self) -> &UpdatePlan {
        &self.plan
    }

    pub fn tasks(&self) -> &GroundTaskQueue {
        &self.tasks
    }

    pub fn retrieval_log(&self) -> &[RetrievalLog] {
        &self.retrieval_log
    }

    pub fn has_received(&self, id: QueryId) -> bool {
        self.received.contains(&id)
    }

    pub fn priority_waiting(&self) -> usize {
        self.priority_waiting.len()
    }

    /// Priority retrievals waiting or running.
    pub fn priority_pending(&self) -> usize {
        self.priority_waiting.len() + usize::from(self.active == Some(TaskClass::Priority))
    }

    pub fn retrieval_active(&self) -> bool {
        self.active.is_some()
    }

    pub fn secondary_waiting(&self) -> usize {
        self.secondary_parked.len()
    }

    /// Starts a new priority round with an empty plan.
    pub fn begin_round(&mut self) {
        self.plan = UpdatePlan::default();
    }

    /// Accepts a delivered priority query for retrieval. A query seen before
    /// still contributes to the plan but is not answered again.
    pub fn receive_priority(&mut self, q: Query) {
        let plan_only = !self.received.insert(q.id);
        self.priority_waiting.push_back(RetrievalJob {
            query: q,
            class: TaskClass::Priority,
            plan_only,
        });
    }

    /// Parks a delivered secondary chunk. Receipt is always acknowledged.
    pub fn handle_secondary_chunk(&mut self, queries: &[Query]) {
        for q in queries {
            if self.received.insert(q.id) {
                self.secondary_parked.push_back(RetrievalJob {
                    query: q.clone(),
                    class: TaskClass::Secondary,
                    plan_only: false,
                });
            }
        }
    }

    /// Next retrieval to run. Secondary work is only released once no
    /// priority query is waiting.
    pub fn next_retrieval(&mut self) -> Option<RetrievalJob> {
        let job = self
            .priority_waiting
            .pop_front()
            .or_else(|| self.secondary_parked.pop_front())?;
        self.active = Some(job.class);
        self.retrieval_log.push(RetrievalLog {
            query: job.query.id,
            class: job.class,
            priority_waiting: self.priority_waiting.len(),
        });
        Some(job)
    }

    /// Retrieves `K` records for the job, extends the plan for priority
    /// work and queues the inference task.
    pub fn complete_retrieval(&mut self, job: RetrievalJob) -> Result<(), GroundError> {
        self.active = None;
        let context = self.archive.retrieve(&job.query, self.k)?;
        if job.class == TaskClass::Priority {
            self.plan.add(context.iter().map(|r| r.image.image_id));
        }
        if !job.plan_only {
            self.tasks.push(GroundTask {
                query: job.query,
                context,
                class: job.class,
            });
        }
        Ok(())
    }

    /// Receipt plus immediate retrieval of one priority query.
    pub fn handle_priority_query(&mut self, q: Query) -> Result<(), GroundError> {
        self.receive_priority(q);
        while self.priority_waiting() > 0 {
            let job = self.next_retrieval().expect("priority job waiting");
            self.complete_retrieval(job)?;
        }
        Ok(())
    }

    /// Hands out the round's metadata and remembers it as advertised.
    pub fn advertise(&mut self) -> Vec<ImageId> {
        self.advertised.extend(self.plan.metadata.iter().copied());
        self.plan.metadata.clone()
    }

    /// Full records for exactly the requested ids.
    pub fn resolve_missing(&mut self, requested: &[ImageId]) -> Result<Vec<ArchiveRecord>, GroundError> {
        let mut out = Vec::with_capacity(requested.len());
        for id in requested {
            if !self.advertised.contains(id) {
                return Err(GroundError::UnknownId(*id));
            }
            let record = self.archive.record(*id).ok_or(GroundError::UnknownId(*id))?;
            out.push(record);
        }
        self.plan.pending_full_records = out.clone();
        Ok(out)
    }

    /// Answers the head task, priority class first, with no confidence check.
    pub fn ground_inference_step(&mut self) -> Result<Option<GroundAnswer>, GroundError> {
        let Some(task) = self.tasks.pop() else {
            return Ok(None);
        };
        let out = self.backend.generate(&task.query, &task.context)?;
        Ok(Some(GroundAnswer {
            answer: out.answer,
            class: task.class,
            context_len: task.context.len(),
            query: task.query,
        }))
    }
}
