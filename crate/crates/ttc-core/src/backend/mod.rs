//! Generation backends: where scored responses come from. The allocator only
//! sees this module's trait, so synthetic simulation, replayed logs, and live
//! endpoints are interchangeable.

#[cfg(feature = "live")]
pub mod live;
pub mod replay;
pub mod synthetic;

use thiserror::Error;

use crate::state::{GenerationResult, QueryId};

/// Output of one `generate_batch` call.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Results in `gen_index` order; may be shorter than requested when a
    /// replay stream ran dry under the `cap` policy.
    pub results: Vec<GenerationResult>,
    /// The backend cannot produce anything further for this query; the caller
    /// should cap it.
    pub exhausted: bool,
}

impl Batch {
    pub fn full(results: Vec<GenerationResult>) -> Self {
        Self { results, exhausted: false }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("query {query} is not part of this backend's query set")]
    UnknownQuery { query: String },
    #[error(
        "replay stream for query {query} exhausted: requested {requested}, {available} remaining"
    )]
    ReplayExhausted { query: String, requested: u64, available: u64 },
    #[error("scoring hook produced reward {reward} outside [0, 1] for query {query}")]
    ScoreOutOfRange { query: String, reward: f64 },
    #[cfg(feature = "live")]
    #[error(transparent)]
    Live(#[from] live::LiveError),
}

/// A source of scored generations.
///
/// Implementations must be pure cursors per query: the results for a query
/// depend only on how many generations that query has received, never on the
/// interleaving with other queries. That is what makes runs with different
/// rules comparable on coupled sample paths.
pub trait Backend {
    /// Produces up to `k` further results for `query`, advancing its stream.
    /// `gen_index` values continue the query's sequence.
    fn generate_batch(&mut self, query: &QueryId, k: u64) -> Result<Batch, BackendError>;
}
