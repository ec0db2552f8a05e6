//! Interaction logs and social edges: ingestion, calendar sessions, the
//! event-level split and negative sampling.

mod dataset;
mod sampling;
mod sessions;
mod split;
mod stats;

pub use dataset::{Dataset, Event};
pub use sampling::sample_negatives;
pub use sessions::{segment_sessions, segment_where, Granularity, Session, SessionSequence};
pub use split::{Split, SplitAssignment, SplitRatios};
pub use stats::{stats, DatasetStats};
