//! Event engine, workload, experiments and reports.

pub mod audit;
pub mod backlog;
pub mod engine;
pub mod metrics;
pub mod scenario;
pub mod sweep;
pub mod workload;

pub use engine::{run, RunOutput, SimError};
pub use scenario::Scenario;
