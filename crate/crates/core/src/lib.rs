//! Satellite-ground collaborative inference simulator.
//!
//! The satellite answers queries from a small LRU-managed archive when its
//! two-stage dispatcher is confident, and otherwise buffers them for the
//! ground station, which holds the full archive and refreshes the satellite
//! during short contact windows.

pub mod archive;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod ground;
pub mod inference;
pub mod kv;
pub mod link;
pub mod rng;
pub mod satellite;
pub mod sim;
pub mod types;

pub use archive::{Archive, ArchiveError, RetrievedRecord};
pub use config::{default_config, ConfigError, SystemConfig};
pub use embedding::{EmbeddingProvider, EmbeddingVector, SyntheticEmbedder, SyntheticParams};
pub use inference::{confidence, InferenceBackend, InferenceOutput, OracleBackend, OracleParams};
pub use link::{generate_windows, transfer_time, ContactWindow};
pub use satellite::{matching_test, DispatchDecision, Satellite, TransmissionBuffer, TransmitReason};
pub use types::{ArchiveRecord, ImageId, ImagePayload, Query, QueryId};
