//! Per-query bookkeeping shared by every allocation rule: generation streams,
//! best-response tracking, budget accounting, and the run trace.

use std::collections::BTreeMap;

use thiserror::Error;

/// Identifies one query within a run.
///
/// `index` is the query's ordinal position in the query set and is what every
/// deterministic iteration and tie-break in this crate keys on; `id` is an
/// opaque label carried through to reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryId {
    /// Opaque identifier, unique within a query set.
    pub id: String,
    /// Ordinal position (0-based); the query set is a bijection onto `0..n`.
    pub index: usize,
}

impl QueryId {
    pub fn new(id: impl Into<String>, index: usize) -> Self {
        Self { id: id.into(), index }
    }
}

/// One generation's scored output.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    /// Canonical response class; exact string equality defines response identity.
    pub answer_key: String,
    /// Oracle score in `[0, 1]`.
    pub reward: f64,
    /// Ground-truth correctness when known; `None` when the log or scorer
    /// carries no correctness bit.
    pub correct: Option<bool>,
    /// Position of this generation within its query's stream (0-based).
    pub gen_index: u64,
}

/// Where a query stands in the allocation loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryStatus {
    /// Still on the allocation frontier.
    Active,
    /// A response met the elimination threshold; no further compute is spent.
    Eliminated,
    /// Removed from the frontier without a qualifying response: the per-query
    /// generation cap was reached, or a replay stream ran dry under the `cap`
    /// policy.
    Capped,
}

/// Errors from state mutation.
#[derive(Debug, Error)]
pub enum StateError {
    #[error("reward {reward} outside [0, 1] for query {query}")]
    RewardOutOfRange { query: String, reward: f64 },
    #[error("query {query} already eliminated; refusing to record further generations")]
    AlreadyEliminated { query: String },
}

/// What a single `record_*` call changed, for incremental bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recorded {
    /// The query transitioned to `Eliminated` on this result.
    pub eliminated: bool,
    /// The best-scoring response changed to this result.
    pub best_updated: bool,
}

/// Per-query bookkeeping: the response multiset, best response, and status.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryState {
    pub query: QueryId,
    /// N(x): number of generations recorded so far.
    pub n_generations: u64,
    /// Every recorded generation, in `gen_index` order.
    pub responses: Vec<GenerationResult>,
    /// Highest reward seen, `None` before the first generation.
    pub best_reward: Option<f64>,
    /// Index into `responses` of the best response; the smallest index wins
    /// among equal rewards, so best-of-N output selection is deterministic.
    pub best_index: Option<usize>,
    /// Histogram of answer keys. A `BTreeMap` so iteration (and therefore
    /// every entropy sum) is deterministic.
    pub answer_counts: BTreeMap<String, u64>,
    /// Running sum of rewards, for the empirical mean.
    pub reward_sum: f64,
    pub status: QueryStatus,
    /// Round in which the query was eliminated, stamped by the allocator.
    pub eliminated_round: Option<u64>,
}

impl QueryState {
    pub fn new(query: QueryId) -> Self {
        Self {
            query,
            n_generations: 0,
            responses: Vec::new(),
            best_reward: None,
            best_index: None,
            answer_counts: BTreeMap::new(),
            reward_sum: 0.0,
            status: QueryStatus::Active,
            eliminated_round: None,
        }
    }

    /// Records one generation and eliminates the query iff
    /// `result.reward >= threshold`. Reward equality with the threshold counts
    /// as success.
    ///
    /// `threshold` is the *effective* threshold: γ minus any oracle slack.
    pub fn record_generation(
        &mut self,
        result: GenerationResult,
        threshold: f64,
    ) -> Result<Recorded, StateError> {
        self.apply(result, Some(threshold))
    }

    /// Records one generation without any elimination check (the uniform
    /// baseline spends its full per-query share regardless of successes).
    pub fn record_without_elimination(
        &mut self,
        result: GenerationResult,
    ) -> Result<Recorded, StateError> {
        self.apply(result, None)
    }

    fn apply(
        &mut self,
        result: GenerationResult,
        threshold: Option<f64>,
    ) -> Result<Recorded, StateError> {
        if !(result.reward >= 0.0 && result.reward <= 1.0) {
            return Err(StateError::RewardOutOfRange {
                query: self.query.id.clone(),
                reward: result.reward,
            });
        }
        if self.status == QueryStatus::Eliminated {
            return Err(StateError::AlreadyEliminated { query: self.query.id.clone() });
        }

        let best_updated = match self.best_reward {
            None => true,
            Some(best) => result.reward > best,
        };
        if best_updated {
            self.best_reward = Some(result.reward);
            self.best_index = Some(self.responses.len());
        }
        *self.answer_counts.entry(result.answer_key.clone()).or_insert(0) += 1;
        self.reward_sum += result.reward;
        self.n_generations += 1;

        let eliminated = match threshold {
            Some(t) if result.reward >= t => {
                self.status = QueryStatus::Eliminated;
                true
            }
            _ => false,
        };
        self.responses.push(result);
        Ok(Recorded { eliminated, best_updated })
    }

    /// r̂(x): mean reward over recorded generations; `None` before the first
    /// generation (cold start is the selection rules' concern, not ours).
    pub fn empirical_mean_reward(&self) -> Option<f64> {
        if self.n_generations == 0 {
            None
        } else {
            Some(self.reward_sum / self.n_generations as f64)
        }
    }

    /// Whether any recorded response is known correct.
    ///
    /// `Some(false)` requires every response to carry a correctness bit (an
    /// empty response set is vacuously `Some(false)`); if no response is known
    /// correct but some bits are missing, the answer is unknowable: `None`.
    pub fn has_correct_response(&self) -> Option<bool> {
        let mut missing = false;
        for r in &self.responses {
            match r.correct {
                Some(true) => return Some(true),
                Some(false) => {}
                None => missing = true,
            }
        }
        if missing {
            None
        } else {
            Some(false)
        }
    }

    /// Whether the best-of-N selected response is known correct; queries with
    /// no generations count as incorrect.
    pub fn best_is_correct(&self) -> Option<bool> {
        match self.best_index {
            None => Some(false),
            Some(i) => self.responses[i].correct,
        }
    }
}

/// Budget accounting: total allowance and per-query spend c(x).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetLedger {
    /// B: the total generation allowance.
    pub total: u64,
    /// Generations actually charged; always `Σ per_query ≤ total`.
    pub spent: u64,
    /// c(x) keyed by query index (query indices are a bijection onto `0..n`,
    /// so a vector is the map).
    pub per_query: Vec<u64>,
}

impl BudgetLedger {
    pub fn new(total: u64, n_queries: usize) -> Self {
        Self { total, spent: 0, per_query: vec![0; n_queries] }
    }

    /// Charges one generation to the query at `index`.
    pub fn charge(&mut self, index: usize) {
        assert!(self.spent < self.total, "budget overspend is an allocator bug");
        self.per_query[index] += 1;
        self.spent += 1;
    }

    pub fn remaining(&self) -> u64 {
        self.total - self.spent
    }
}

/// One trace record, appended after every applied generation.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Allocation round (1-based). For round-robin rules a round visits every
    /// eligible query; for single-selection rules each selection is a round.
    pub round: u64,
    /// Cumulative generations charged, including this one.
    pub spent: u64,
    /// Queries still `Active` after applying this generation.
    pub active_count: usize,
    /// Coverage over the full query set, when correctness bits permit it.
    pub coverage: Option<f64>,
    /// Accuracy over the full query set, when correctness bits permit it.
    pub accuracy: Option<f64>,
}

/// Time series of the allocation loop, one row per generation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    /// Total generations recorded (equals the ledger's `spent`).
    pub fn generations(&self) -> u64 {
        self.rows.len() as u64
    }
}
